"""Gaussian Squeeze: N agents each allocate 0..9 units; the team is paid on the total.

    r(x) = sum_k x * exp(-(x - mu_k)^2 / sigma_k^2),   x = sum_i a_i

A stateless one-step game, so every episode is a single terminal step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import exp

import numpy as np

from ..errors import ConfigurationError, InputError

N_ACTIONS = 10
DEFAULT_TARGETS = ((0.0, 100.0), (400.0, 200.0))


@dataclass(frozen=True)
class SqueezeConfig:
    n_agents: int = 100
    targets: tuple = DEFAULT_TARGETS

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple((float(m), float(s)) for m, s in self.targets))
        if self.n_agents < 1:
            raise ConfigurationError("need at least one agent")
        if not self.targets:
            raise ConfigurationError("need at least one allocation target")
        if any(s <= 0 for _, s in self.targets):
            raise ConfigurationError("target widths must be positive")


@dataclass(frozen=True)
class SqueezeOutcome:
    total: int
    reward: float
    done: bool = field(default=True)


def reward_at(config: SqueezeConfig, total) -> float:
    x = float(total)
    return sum(x * exp(-((x - mu) ** 2) / sigma ** 2) for mu, sigma in config.targets)


def rewards_at(config: SqueezeConfig, totals: np.ndarray) -> np.ndarray:
    x = np.asarray(totals, dtype=np.float64)
    return sum(x * np.exp(-((x - mu) ** 2) / sigma ** 2) for mu, sigma in config.targets)


def _total(config: SqueezeConfig, actions) -> int:
    actions = np.asarray(actions)
    if actions.shape != (config.n_agents,):
        raise InputError(f"expected {config.n_agents} actions, got shape {actions.shape}")
    if not np.issubdtype(actions.dtype, np.integer):
        if not np.all(actions == np.round(actions)):
            raise InputError("actions must be integers")
        actions = actions.astype(np.int64)
    if np.any((actions < 0) | (actions >= N_ACTIONS)):
        raise InputError("actions must lie in 0..9")
    return int(actions.sum())


def reward(config: SqueezeConfig, actions) -> float:
    """Shared team reward for one joint action."""
    return reward_at(config, _total(config, actions))


def step(config: SqueezeConfig, actions) -> SqueezeOutcome:
    x = _total(config, actions)
    return SqueezeOutcome(x, reward_at(config, x))


STATE = np.ones(1)


def observe(config: SqueezeConfig, agent: int) -> np.ndarray:
    """Every agent sees the same constant encoding; the game has no state."""
    return STATE.copy()


def optimal_total(config: SqueezeConfig) -> tuple[int, float]:
    """Exhaustive scan over every reachable total; smallest maximiser wins ties."""
    xs = np.arange((N_ACTIONS - 1) * config.n_agents + 1)
    r = np.array([reward_at(config, x) for x in xs])
    best = int(np.argmax(r))
    return best, float(r[best])
