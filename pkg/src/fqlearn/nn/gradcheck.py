"""Central finite-difference check of parameter gradients."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(f, theta: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``theta``, perturbed in place."""
    g = np.empty_like(theta)
    for k in range(theta.size):
        old = theta[k]
        theta[k] = old + eps
        hi = f()
        theta[k] = old - eps
        lo = f()
        theta[k] = old
        g[k] = (hi - lo) / (2 * eps)
    return g


def _masks(cache) -> list:
    """Every ReLU on/off mask found in a (possibly nested) forward cache."""
    if isinstance(cache, np.ndarray):
        return [cache] if cache.dtype == bool else []
    if isinstance(cache, (list, tuple)):
        return [m for c in cache for m in _masks(c)]
    return []


def gradient_check_detail(net, x, eps: float = 1e-5, upstream=None, seed: int = 0):
    """(max relative error, number of parameters whose +-eps probe flips a ReLU).

    A flipped ReLU means the central difference straddles a kink, where it does
    not estimate the derivative at all.
    """
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    x, _ = net._batch(x)
    out, cache = net.forward_train(x)
    if upstream is None:
        upstream = np.random.default_rng(seed).standard_normal(out.shape)
    analytic = net.backward(x, upstream)
    base = _masks(cache)
    crossings = 0

    def probe():
        nonlocal crossed
        y, c = net.forward_train(x)
        crossed = crossed or any(not np.array_equal(a, b) for a, b in zip(base, _masks(c)))
        return float(np.sum(upstream * y))

    theta = net.params
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        crossed = False
        numeric[k] = numeric_gradient(probe, theta[k:k + 1], eps)[0]
        crossings += crossed
    return relative_error(analytic, numeric), crossings


def gradient_check(net, x, eps: float = 1e-5, upstream=None, seed: int = 0) -> float:
    """Max relative error between backprop and finite differences.

    The scalar probed is ``sum(upstream * net(x))``; by default ``upstream`` is a
    fixed standard-normal draw so every output unit contributes.
    """
    return gradient_check_detail(net, x, eps, upstream, seed)[0]
