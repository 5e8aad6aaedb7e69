"""Networks with a single flat parameter vector.

``Network`` is a plain stack of layers. ``TwoStreamNetwork`` and
``DuelingNetwork`` compose stacks; their children are bound to slices of the
parent's parameter vector so copying, optimizing and checkpointing stay
uniform across all of them.
"""
from __future__ import annotations

from math import prod

import numpy as np

from ..errors import ConfigurationError
from .layers import LAYER_TYPES, LayerSpec, conv2d, dense, init_params, relu


def _as_rng(seed_or_rng):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


class Module:
    """Shared plumbing: flat parameters, batching rules, forward counting."""

    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]

    def __init__(self):
        self.n_forward = 0

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def params(self) -> np.ndarray:
        return self._params

    @params.setter
    def params(self, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != (self.n_params_expected,):
            raise ConfigurationError(
                f"parameter vector has shape {value.shape}, expected ({self.n_params_expected},)")
        self._params = value
        self._bind()

    def _batch(self, x):
        """Return (batched input, was_single)."""
        x = np.asarray(x, dtype=np.float64)
        n_in = prod(self.in_shape)
        if x.shape == self.in_shape:
            return x.reshape((1,) + self.in_shape), True
        if x.ndim >= 2 and x.shape[1:] == self.in_shape:
            return x, False
        if x.ndim == 2 and x.shape[1] == n_in:
            return x.reshape((x.shape[0],) + self.in_shape), False
        raise ConfigurationError(f"input shape {x.shape} does not match {self.in_shape}")

    def forward(self, x):
        xb, single = self._batch(x)
        y, _ = self.forward_train(xb)
        return y[0] if single else y

    def backward(self, x, upstream):
        """Gradient of <upstream, forward(x)> with respect to the parameters."""
        xb, single = self._batch(x)
        y, cache = self.forward_train(xb)
        upstream = np.asarray(upstream, dtype=np.float64)
        if single:
            upstream = upstream.reshape((1,) + upstream.shape)
        if upstream.shape != y.shape:
            raise ConfigurationError(f"upstream shape {upstream.shape} != output shape {y.shape}")
        grad, _ = self.backward_cached(cache, upstream)
        return grad

    def clone(self) -> "Module":
        other = build(self.to_config())
        other.params = self.params.copy()
        return other

    def same_architecture(self, other) -> bool:
        return self.to_config() == other.to_config()


class Network(Module):
    def __init__(self, specs, seed=0, params=None):
        super().__init__()
        specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
        if not specs:
            raise ConfigurationError("network needs at least one layer")
        for a, b in zip(specs, specs[1:]):
            if a.out_shape != b.in_shape:
                raise ConfigurationError(f"layer shapes do not chain: {a.out_shape} -> {b.in_shape}")
        self.specs = tuple(specs)
        self.in_shape = specs[0].in_shape
        self.out_shape = specs[-1].out_shape
        self.offsets = np.cumsum([0] + [s.n_params for s in specs])
        self.n_params_expected = int(self.offsets[-1])
        if params is None:
            rng = _as_rng(seed)
            params = np.concatenate([init_params(s, rng) for s in specs])
        self.params = params

    def _bind(self):
        self.layers = [
            LAYER_TYPES[s.kind](s, self._params[lo:hi])
            for s, lo, hi in zip(self.specs, self.offsets[:-1], self.offsets[1:])
        ]

    def forward_train(self, x):
        self.n_forward += 1
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward_cached(self, caches, dy):
        grads = []
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            g, dy = layer.backward(c, dy)
            grads.append(g)
        return np.concatenate(grads[::-1]), dy

    def to_config(self) -> dict:
        return {"type": "network", "layers": [s.to_dict() for s in self.specs]}


class _Composite(Module):
    children: list

    def _setup(self, params):
        sizes = [c.n_params for c in self.children]
        self.offsets = np.cumsum([0] + sizes)
        self.n_params_expected = int(self.offsets[-1])
        if params is None:
            params = np.concatenate([c.params for c in self.children])
        self.params = params

    def _bind(self):
        for c, lo, hi in zip(self.children, self.offsets[:-1], self.offsets[1:]):
            c.params = self._params[lo:hi]


class TwoStreamNetwork(_Composite):
    """Spatial stack and feature stack side by side, concatenated into a head.

    Input is one flat row per sample: the flattened spatial block followed by
    the feature vector.
    """

    def __init__(self, spatial: Network, features: Network, head: Network, params=None):
        super().__init__()
        joined = prod(spatial.out_shape) + prod(features.out_shape)
        if head.in_shape != (joined,):
            raise ConfigurationError(f"head input {head.in_shape} != ({joined},)")
        self.spatial, self.features, self.head = spatial, features, head
        self.children = [spatial, features, head]
        self.n_spatial = prod(spatial.in_shape)
        self.in_shape = (self.n_spatial + prod(features.in_shape),)
        self.out_shape = head.out_shape
        self._setup(params)

    def forward_train(self, x):
        self.n_forward += 1
        b = x.shape[0]
        xs = x[:, :self.n_spatial].reshape((b,) + self.spatial.in_shape)
        hs, cs = self.spatial.forward_train(xs)
        hf, cf = self.features.forward_train(x[:, self.n_spatial:])
        y, ch = self.head.forward_train(np.concatenate([hs.reshape(b, -1), hf], axis=1))
        return y, (cs, cf, ch, hs.shape)

    def backward_cached(self, cache, dy):
        cs, cf, ch, hs_shape = cache
        gh, dj = self.head.backward_cached(ch, dy)
        n_s = prod(hs_shape[1:])
        gs, dxs = self.spatial.backward_cached(cs, dj[:, :n_s].reshape(hs_shape))
        gf, dxf = self.features.backward_cached(cf, dj[:, n_s:])
        dx = np.concatenate([dxs.reshape(dy.shape[0], -1), dxf], axis=1)
        return np.concatenate([gs, gf, gh]), dx

    def to_config(self) -> dict:
        return {"type": "two_stream", "spatial": self.spatial.to_config(),
                "features": self.features.to_config(), "head": self.head.to_config()}


class DuelingNetwork(_Composite):
    """Q(s, a) = V(s) + A(s, a) - mean_a A(s, a) over a shared trunk."""

    def __init__(self, trunk: Module, value: Network, advantage: Network, params=None):
        super().__init__()
        if value.in_shape != trunk.out_shape or advantage.in_shape != trunk.out_shape:
            raise ConfigurationError("dueling heads must read the trunk output")
        if value.out_shape != (1,):
            raise ConfigurationError("value head must emit a scalar")
        self.trunk, self.value, self.advantage = trunk, value, advantage
        self.children = [trunk, value, advantage]
        self.in_shape = trunk.in_shape
        self.out_shape = advantage.out_shape
        self._setup(params)

    def forward_train(self, x):
        self.n_forward += 1
        h, ct = self.trunk.forward_train(x)
        v, cv = self.value.forward_train(h)
        a, ca = self.advantage.forward_train(h)
        return aggregate_dueling(v, a), (ct, cv, ca)

    def backward_cached(self, cache, dy):
        ct, cv, ca = cache
        dv = dy.sum(axis=1, keepdims=True)
        da = dy - dy.mean(axis=1, keepdims=True)
        gv, dhv = self.value.backward_cached(cv, dv)
        ga, dha = self.advantage.backward_cached(ca, da)
        gt, dx = self.trunk.backward_cached(ct, dhv + dha)
        return np.concatenate([gt, gv, ga]), dx

    def to_config(self) -> dict:
        return {"type": "dueling", "trunk": self.trunk.to_config(),
                "value": self.value.to_config(), "advantage": self.advantage.to_config()}


def aggregate_dueling(value, advantage):
    """Combine a (B, 1) value and (B, A) advantages into Q-values."""
    return value + (advantage - advantage.mean(axis=1, keepdims=True))


def build(config: dict, params=None, seed=0) -> Module:
    """Rebuild a module from ``to_config()`` output."""
    kind = config["type"]
    if kind == "network":
        return Network(config["layers"], seed=seed, params=params)
    rng = _as_rng(seed)
    if kind == "two_stream":
        parts = [build(config[k], seed=rng) for k in ("spatial", "features", "head")]
        return TwoStreamNetwork(*parts, params=params)
    if kind == "dueling":
        parts = [build(config[k], seed=rng) for k in ("trunk", "value", "advantage")]
        return DuelingNetwork(*parts, params=params)
    raise ConfigurationError(f"unknown module type {kind!r}")


def mlp_specs(n_in: int, hidden, n_out: int) -> list[LayerSpec]:
    specs, width = [], n_in
    for h in hidden:
        specs += [dense(width, h), relu(h)]
        width = h
    specs.append(dense(width, n_out))
    return specs


def mlp(n_in: int, hidden, n_out: int, seed=0) -> Network:
    return Network(mlp_specs(n_in, hidden, n_out), seed=seed)


def conv_two_stream(view: int, channels: int, n_features: int, n_out: int,
                    conv_channels=(16, 16), kernel=3, hidden=64, seed=0) -> TwoStreamNetwork:
    """Two conv layers plus one dense for the view, one dense for the features."""
    rng = _as_rng(seed)
    shape = (view, view, channels)
    c1, c2 = conv_channels
    s1 = conv2d(shape, c1, kernel)
    s2 = conv2d(s1.out_shape, c2, kernel)
    spatial = Network([s1, relu(s1.out_shape), s2, relu(s2.out_shape),
                       dense(s2.out_shape, hidden), relu(hidden)], seed=rng)
    features = Network([dense(n_features, hidden), relu(hidden)], seed=rng)
    head = Network([dense(2 * hidden, n_out)], seed=rng)
    return TwoStreamNetwork(spatial, features, head)
