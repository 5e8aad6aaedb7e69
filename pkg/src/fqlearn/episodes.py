"""Battle episode runner and the policies that can drive an army."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coset import CoSet
from .envs import battle
from .envs.battle import BattleConfig, GridState


class Policy:
    def act(self, state: GridState, config: BattleConfig, agents: np.ndarray, view, rng) -> np.ndarray:
        raise NotImplementedError


@dataclass
class StepView:
    """Everything a policy may look at for one step (shared by all policies)."""
    state: GridState
    obs: np.ndarray        # (n, S); rows of dead agents are zero
    radius: int | None = None
    _members: dict = field(default_factory=dict, repr=False)

    def membership(self, radius=None) -> np.ndarray:
        """(n, n) co-agent membership for ``radius`` (None: whole army), cached."""
        if radius not in self._members:
            self._members[radius] = battle.neighbor_matrix(self.state, radius)
        return self._members[radius]

    @property
    def members(self) -> np.ndarray:
        return self.membership(self.radius)


class LearnerPolicy(Policy):
    """Acts through a learner; co-agents are same-army neighbours within ``radius``."""

    def __init__(self, learner, epsilon: float = 0.0, radius=None):
        self.learner = learner
        self.epsilon = epsilon
        self.radius = radius

    def act(self, state, config, agents, view, rng):
        co = CoSet.from_members(view.obs, state.last_action, view.membership(self.radius)[agents])
        return self.learner.act(view.obs[agents], co, self.epsilon, rng)


class IdlePolicy(Policy):
    """Stands still (needs the idle action enabled)."""

    def act(self, state, config, agents, view, rng):
        return np.full(len(agents), battle.IDLE, dtype=np.int64)


class RandomPolicy(Policy):
    def act(self, state, config, agents, view, rng):
        return rng.integers(config.n_actions, size=len(agents))


class AttackAdjacentPolicy(Policy):
    """Hit an adjacent enemy if there is one, otherwise step towards the nearest enemy."""

    def act(self, state, config, agents, view, rng):
        out = np.empty(len(agents), dtype=np.int64)
        for k, i in enumerate(agents):
            enemies = np.nonzero(state.alive & (state.group != state.group[i]))[0]
            if enemies.size == 0:
                out[k] = 0
                continue
            delta = state.pos[enemies] - state.pos[i]
            cheb = np.abs(delta).max(axis=1)
            j = int(np.argmin(cheb))
            step = np.sign(delta[j])
            d = int(np.nonzero((battle.DIRECTIONS == step).all(axis=1))[0][0])
            out[k] = 8 + d if cheb[j] == 1 else d
        return out


def run_episode(config: BattleConfig, seed: int, controllers: dict, rng, radius=None,
                on_step=None) -> battle.EpisodeRecord:
    """Play one battle. ``controllers`` maps army (1, 2) to a Policy.

    ``on_step(before, after, view, actions, rewards)`` is called after every step.
    """
    state = battle.reset(config, seed)
    record = battle.new_record(state)
    n = config.n_agents
    while not battle.is_done(state, config)[0]:
        ids = np.nonzero(state.alive)[0]
        obs = np.zeros((n, config.state_dim))
        obs[ids] = battle.observe_all(state, config, ids)
        view = StepView(state, obs, radius)
        actions = np.full(n, -1, dtype=np.int64)
        by_policy: dict[int, tuple] = {}
        for army, policy in controllers.items():
            mine = ids[state.group[ids] == army]
            key = id(policy)
            prev = by_policy.get(key, (policy, np.zeros(0, dtype=np.int64)))[1]
            by_policy[key] = (policy, np.concatenate([prev, mine]))
        for policy, agents in by_policy.values():
            if agents.size:
                agents = np.sort(agents)
                actions[agents] = policy.act(state, config, agents, view, rng)
        after, rewards, _ = battle.step(state, config, actions)
        battle.record_step(record, state, after, rewards, actions)
        if on_step is not None:
            on_step(state, after, view, actions, rewards)
        state = after
    record.winner = battle.is_done(state, config)[1]
    return record
