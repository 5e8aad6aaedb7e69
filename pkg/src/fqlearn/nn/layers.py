"""Layer kinds for the network engine.

Every layer works on batch-first float64 arrays and reads its weights from a
slice of the owning network's flat parameter vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import prod, sqrt

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError

KINDS = ("dense", "conv2d", "relu")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    kernel: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(int(s) for s in self.in_shape))
        object.__setattr__(self, "out_shape", tuple(int(s) for s in self.out_shape))
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if any(s < 1 for s in self.in_shape + self.out_shape):
            raise ConfigurationError(f"non-positive dimension in {self}")
        if self.kind == "relu" and self.in_shape != self.out_shape:
            raise ConfigurationError("relu must preserve shape")
        if self.kind == "conv2d":
            if self.kernel is None or self.kernel < 1:
                raise ConfigurationError("conv2d needs kernel >= 1")
            if self.kernel % 2 == 0:
                raise ConfigurationError("conv2d 'same' padding needs an odd kernel")
            if len(self.in_shape) != 3 or len(self.out_shape) != 3:
                raise ConfigurationError("conv2d shapes are (height, width, channels)")
            if self.in_shape[:2] != self.out_shape[:2]:
                raise ConfigurationError("conv2d is stride 1 with same padding")

    @property
    def n_params(self) -> int:
        if self.kind == "dense":
            return (prod(self.in_shape) + 1) * prod(self.out_shape)
        if self.kind == "conv2d":
            k = self.kernel
            return (k * k * self.in_shape[2] + 1) * self.out_shape[2]
        return 0

    @property
    def fans(self) -> tuple[int, int]:
        if self.kind == "dense":
            return prod(self.in_shape), prod(self.out_shape)
        k2 = self.kernel * self.kernel
        return k2 * self.in_shape[2], k2 * self.out_shape[2]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "in_shape": list(self.in_shape), "out_shape": list(self.out_shape)}
        if self.kernel is not None:
            d["kernel"] = self.kernel
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(d["kind"], tuple(d["in_shape"]), tuple(d["out_shape"]), d.get("kernel"))


def dense(n_in, n_out) -> LayerSpec:
    n_in = (n_in,) if isinstance(n_in, int) else tuple(n_in)
    return LayerSpec("dense", n_in, (n_out,))


def relu(shape) -> LayerSpec:
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    return LayerSpec("relu", shape, shape)


def conv2d(in_shape, out_channels: int, kernel: int) -> LayerSpec:
    h, w, _ = in_shape
    return LayerSpec("conv2d", tuple(in_shape), (h, w, out_channels), kernel)


def init_params(spec: LayerSpec, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    if spec.kind == "relu":
        return np.empty(0)
    fan_in, fan_out = spec.fans
    limit = sqrt(6.0 / (fan_in + fan_out))
    n_out = spec.out_shape[-1] if spec.kind == "conv2d" else prod(spec.out_shape)
    w = rng.uniform(-limit, limit, size=spec.n_params - n_out)
    return np.concatenate([w, np.zeros(n_out)])


class Dense:
    def __init__(self, spec: LayerSpec, theta: np.ndarray):
        self.spec = spec
        self.n_in = prod(spec.in_shape)
        self.n_out = prod(spec.out_shape)
        self.bind(theta)

    def bind(self, theta):
        split = self.n_in * self.n_out
        self.W = theta[:split].reshape(self.n_in, self.n_out)
        self.b = theta[split:]

    def forward(self, x):
        x2 = x.reshape(x.shape[0], self.n_in)
        y = x2 @ self.W + self.b
        return y.reshape((x.shape[0],) + self.spec.out_shape), x2

    def backward(self, cache, dy):
        x2 = cache
        dy2 = dy.reshape(dy.shape[0], self.n_out)
        grad = np.concatenate([(x2.T @ dy2).ravel(), dy2.sum(axis=0)])
        dx = (dy2 @ self.W.T).reshape((dy.shape[0],) + self.spec.in_shape)
        return grad, dx


class ReLU:
    def __init__(self, spec: LayerSpec, theta: np.ndarray):
        self.spec = spec

    def bind(self, theta):
        pass

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, cache, dy):
        return np.empty(0), np.where(cache, dy, 0.0)


class Conv2d:
    """Stride-1, zero 'same' padding convolution over (batch, h, w, c) input."""

    def __init__(self, spec: LayerSpec, theta: np.ndarray):
        self.spec = spec
        self.k = spec.kernel
        self.c_in = spec.in_shape[2]
        self.c_out = spec.out_shape[2]
        self.bind(theta)

    def bind(self, theta):
        split = self.k * self.k * self.c_in * self.c_out
        self.W = theta[:split].reshape(self.k * self.k * self.c_in, self.c_out)
        self.b = theta[split:]

    def _cols(self, x):
        p = self.k // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        win = sliding_window_view(xp, (self.k, self.k), axis=(1, 2))  # b,h,w,c,ki,kj
        win = win.transpose(0, 1, 2, 4, 5, 3)
        return win.reshape(-1, self.k * self.k * self.c_in)

    def forward(self, x):
        b, h, w, _ = x.shape
        cols = self._cols(x)
        y = cols @ self.W + self.b
        return y.reshape(b, h, w, self.c_out), cols

    def backward(self, cache, dy):
        cols = cache
        b, h, w, _ = dy.shape
        dy2 = dy.reshape(-1, self.c_out)
        grad = np.concatenate([(cols.T @ dy2).ravel(), dy2.sum(axis=0)])
        dcols = (dy2 @ self.W.T).reshape(b, h, w, self.k, self.k, self.c_in)
        p = self.k // 2
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, self.c_in))
        for i in range(self.k):
            for j in range(self.k):
                dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
        return grad, dxp[:, p:p + h, p:p + w, :]


LAYER_TYPES = {"dense": Dense, "relu": ReLU, "conv2d": Conv2d}
