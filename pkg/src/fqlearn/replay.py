"""Uniform experience replay."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest item is overwritten first."""

    def __init__(self, capacity: int, rng: np.random.Generator | int | None = None):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.capacity = capacity
        self.items: list = []
        self.head = 0
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def __len__(self):
        return len(self.items)

    def add(self, item) -> None:
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self.head] = item
        self.head = (self.head + 1) % self.capacity

    def extend(self, items) -> None:
        for item in items:
            self.add(item)

    def sample(self, batch_size: int) -> list:
        """Draw ``batch_size`` items uniformly with replacement."""
        if not self.items:
            raise ConfigurationError("cannot sample from an empty buffer")
        idx = self.rng.integers(len(self.items), size=batch_size)
        return [self.items[i] for i in idx]
