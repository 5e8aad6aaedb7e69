"""SGD and Adam over flat parameter vectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, TrainingError


@dataclass
class OptimizerState:
    algorithm: str = "adam"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: float | None = None
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.algorithm!r}")
        if self.lr < 0:
            raise ConfigurationError("learning rate must be non-negative")

    def step(self, nets, grads) -> None:
        """Apply one update to every (net, grad) pair, in place."""
        if len(nets) != len(grads):
            raise ConfigurationError("one gradient per network")
        for net, g in zip(nets, grads):
            if g.shape != net.params.shape:
                raise ConfigurationError(f"gradient length {g.shape} != parameter length {net.params.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient component")
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(g @ g) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        self.step_count += 1
        if self.algorithm == "sgd":
            for net, g in zip(nets, grads):
                net.params -= self.lr * g
            return
        if not self.m:
            self.m = [np.zeros_like(n.params) for n in nets]
            self.v = [np.zeros_like(n.params) for n in nets]
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for net, g, m, v in zip(nets, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            net.params -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimizer_step(net, grads, opt: OptimizerState):
    opt.step([net], [np.asarray(grads, dtype=np.float64)])
    return net, opt
