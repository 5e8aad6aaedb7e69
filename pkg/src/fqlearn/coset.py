"""Co-agent sets and transition batches.

A ``CoSet`` describes, for each of ``n`` owners, a weighted multiset of
(state, action) rows. Identical rows are stored once; ``weights[i, k]`` is the
share of owner ``i``'s co-agents equal to row ``k``. Averaging any per-row
quantity over an owner's co-agents is then ``weights @ values``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def one_hot(actions, n_actions: int) -> np.ndarray:
    """One-hot rows; a negative action (no action taken yet) maps to zeros."""
    actions = np.asarray(actions, dtype=np.int64)
    out = np.zeros((actions.size, n_actions))
    ok = actions >= 0
    out[np.nonzero(ok)[0], actions[ok]] = 1.0
    return out


@dataclass(frozen=True)
class Transition:
    """One agent's replay record.

    ``next_co_actions`` are the time-t actions of the agents listed in
    ``next_co_states``; they stand in for the co-agents' unknown next actions.
    """

    state: np.ndarray
    action: int
    co_states: np.ndarray
    co_actions: np.ndarray
    reward: float
    next_state: np.ndarray | None = None
    next_co_states: np.ndarray | None = None
    next_co_actions: np.ndarray | None = None
    terminal: bool = True

    def __post_init__(self):
        if len(self.co_states) != len(self.co_actions):
            raise ConfigurationError("co-agent states and actions differ in length")
        if not self.terminal:
            if self.next_state is None or self.next_co_states is None or self.next_co_actions is None:
                raise ConfigurationError("non-terminal transition needs next-state fields")
            if len(self.next_co_states) != len(self.next_co_actions):
                raise ConfigurationError("next co-agent states and actions differ in length")


@dataclass
class CoSet:
    states: np.ndarray   # (K, S) unique rows
    actions: np.ndarray  # (K,)
    weights: np.ndarray  # (n, K); each row sums to 1, or 0 when the owner has no co-agents
    sizes: np.ndarray    # (n,) co-agent count per owner

    @classmethod
    def build(cls, groups_states, groups_actions, state_dim: int) -> "CoSet":
        """From per-owner lists of co-agent states and actions."""
        sizes = np.array([len(a) for a in groups_actions], dtype=np.int64)
        n = sizes.size
        if sizes.sum() == 0:
            return cls(np.zeros((0, state_dim)), np.zeros(0, dtype=np.int64), np.zeros((n, 0)), sizes)
        states = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1, state_dim)
                                 for s in groups_states])
        actions = np.concatenate([np.asarray(a, dtype=np.int64) for a in groups_actions])
        owner = np.repeat(np.arange(n), sizes)
        return cls._from_rows(states, actions, owner, sizes)

    @classmethod
    def from_members(cls, states, actions, members: np.ndarray) -> "CoSet":
        """From a pool of agents and a boolean (n, pool) membership matrix.

        Pool rows are taken as distinct, so no de-duplication is attempted.
        """
        members = np.asarray(members, dtype=bool)
        sizes = members.sum(axis=1)
        denom = np.where(sizes > 0, sizes, 1).astype(np.float64)
        return cls(np.asarray(states, dtype=np.float64), np.asarray(actions, dtype=np.int64),
                   members / denom[:, None], sizes)

    @classmethod
    def all_others(cls, state, actions) -> "CoSet":
        """Every agent shares ``state``; each one's co-agents are all the others."""
        actions = np.asarray(actions, dtype=np.int64)
        n = actions.size
        kinds, inv = np.unique(actions, return_inverse=True)
        counts = np.bincount(inv.reshape(-1), minlength=kinds.size).astype(np.float64)
        own = np.zeros((n, kinds.size))
        own[np.arange(n), inv.reshape(-1)] = 1.0
        sizes = np.full(n, n - 1, dtype=np.int64)
        weights = (counts[None, :] - own) / max(n - 1, 1)
        states = np.repeat(np.asarray(state, dtype=np.float64).reshape(1, -1), kinds.size, axis=0)
        return cls(states, kinds, weights, sizes)

    @classmethod
    def _from_rows(cls, states, actions, owner, sizes):
        n = sizes.size
        if states.shape[0] == 0:
            return cls(np.zeros((0, states.shape[1])), np.zeros(0, dtype=np.int64), np.zeros((n, 0)), sizes)
        # hash rows by their bytes; np.unique(axis=0) sorts wide rows and is far slower
        states = np.ascontiguousarray(states)
        first: dict[bytes, int] = {}
        sid = np.fromiter((first.setdefault(row.tobytes(), len(first)) for row in states),
                          dtype=np.int64, count=states.shape[0])
        ustates = states[np.unique(sid, return_index=True)[1]]
        span = int(actions.max()) + 2  # actions may be -1
        keys, inv = np.unique(sid * span + (actions + 1), return_inverse=True)
        inv = inv.reshape(-1)
        k = keys.size
        counts = np.bincount(owner * k + inv, minlength=n * k).reshape(n, k).astype(np.float64)
        denom = np.where(sizes > 0, sizes, 1).astype(np.float64)
        return cls(ustates[keys // span], keys % span - 1, counts / denom[:, None], sizes)

    def mean_action(self, n_actions: int) -> np.ndarray:
        return self.weights @ one_hot(self.actions, n_actions)


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray
    co: CoSet
    live: np.ndarray            # indices of non-terminal rows
    next_states: np.ndarray     # (len(live), S)
    next_co: CoSet              # owners are the live rows, in order

    def __len__(self):
        return self.actions.size


def collate(transitions, state_dim: int | None = None, with_co: bool = True) -> TransitionBatch:
    """Stack transitions; ``with_co=False`` skips the co-agent sets (IQL ignores them)."""
    if isinstance(transitions, TransitionBatch):
        return transitions
    transitions = list(transitions)
    if not transitions:
        raise ConfigurationError("empty batch")
    states = np.stack([np.asarray(t.state, dtype=np.float64).reshape(-1) for t in transitions])
    dim = states.shape[1] if state_dim is None else state_dim
    terminal = np.array([bool(t.terminal) for t in transitions])
    live = np.nonzero(~terminal)[0]
    alive = [transitions[i] for i in live]
    if alive:
        next_states = np.stack([np.asarray(t.next_state, dtype=np.float64).reshape(-1) for t in alive])
    else:
        next_states = np.zeros((0, dim))
    if with_co:
        co = CoSet.build([t.co_states for t in transitions], [t.co_actions for t in transitions], dim)
        next_co = CoSet.build([t.next_co_states for t in alive], [t.next_co_actions for t in alive], dim)
    else:
        co = CoSet.build([()] * len(transitions), [()] * len(transitions), dim)
        next_co = CoSet.build([()] * len(alive), [()] * len(alive), dim)
    return TransitionBatch(
        states=states,
        actions=np.array([int(t.action) for t in transitions], dtype=np.int64),
        rewards=np.array([float(t.reward) for t in transitions]),
        terminal=terminal,
        co=co,
        live=live,
        next_states=next_states,
        next_co=next_co,
    )
