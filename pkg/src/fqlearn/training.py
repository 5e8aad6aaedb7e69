"""Training loops for Gaussian Squeeze and battle self-play."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .agents import Learner, make_learner
from .coset import CoSet, Transition
from .envs import battle, squeeze
from .episodes import LearnerPolicy, run_episode
from .errors import ConfigurationError, TrainingError
from .replay import ReplayBuffer

log = logging.getLogger(__name__)

SQUEEZE_COLUMNS = ["episode", "raw_reward", "smoothed_reward", "epsilon", "loss"]
BATTLE_COLUMNS = ["round",
                  "killing_index_1", "killing_index_2",
                  "mean_rewards_1", "mean_rewards_2",
                  "total_rewards_1", "total_rewards_2"]


@dataclass
class TrainResult:
    learners: list[Learner]
    columns: list[str]
    curve: list[dict] = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        return np.array([row[name] for row in self.curve], dtype=np.float64)


def _streams(seed: int):
    """Independent generators for acting, replay sampling and environment seeds."""
    act, sample, env = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(act), np.random.default_rng(sample), np.random.default_rng(env)


def _train_steps(learner, buffer, cfg):
    loss = float("nan")
    if len(buffer) >= cfg.batch_size:
        for _ in range(cfg.train_steps_per_round):
            try:
                loss = learner.train(buffer.sample(cfg.batch_size))
            except TrainingError as exc:
                raise TrainingError(f"{cfg.algorithm} diverged after {learner.train_steps} "
                                    f"train steps: {exc}") from exc
    return loss


def train_squeeze(cfg, progress=None) -> TrainResult:
    """One episode per environment step; one group model for every agent."""
    if cfg.environment != "squeeze":
        raise ConfigurationError("train_squeeze needs environment: squeeze")
    env = cfg.squeeze_config()
    n = env.n_agents
    learner = make_learner(cfg, state_dim=1, n_actions=squeeze.N_ACTIONS)
    act_rng, sample_rng, _ = _streams(cfg.seed)
    buffer = ReplayBuffer(cfg.buffer_capacity, sample_rng)
    state = squeeze.observe(env, 0)
    states = np.repeat(state[None, :], n, axis=0)
    co_states = np.broadcast_to(state, (max(n - 1, 0), 1))
    last = np.full(n, -1, dtype=np.int64)
    result = TrainResult([learner], SQUEEZE_COLUMNS)
    smoothed = None
    for ep in range(cfg.rounds):
        eps = cfg.epsilon.value(ep)
        co = CoSet.all_others(state, last) if n > 1 else CoSet.build([()], [()], 1)
        actions = learner.act(states, co, eps, act_rng)
        outcome = squeeze.step(env, actions)
        for i in range(n):
            buffer.add(Transition(state, int(actions[i]), co_states, np.delete(actions, i),
                                  outcome.reward, terminal=True))
        loss = _train_steps(learner, buffer, cfg)
        smoothed = outcome.reward if smoothed is None else \
            cfg.smoothing * smoothed + (1 - cfg.smoothing) * outcome.reward
        result.curve.append({"episode": ep, "raw_reward": outcome.reward,
                             "smoothed_reward": smoothed, "epsilon": eps, "loss": loss})
        last = actions
        if progress is not None:
            progress(ep, result.curve[-1])
    return result


class _Frame:
    __slots__ = ("obs", "actions", "members")

    def __init__(self, obs, actions, members):
        self.obs, self.actions, self.members = obs, actions, members


class FrameTransition:
    """A Transition view onto shared per-step frames (no per-agent copies).

    Exposes the same attributes as :class:`coset.Transition`.
    """

    __slots__ = ("frame", "next_frame", "agent", "reward", "terminal")

    def __init__(self, frame, next_frame, agent, reward, terminal):
        self.frame, self.next_frame = frame, next_frame
        self.agent, self.reward, self.terminal = agent, reward, terminal

    @property
    def state(self):
        return self.frame.obs[self.agent]

    @property
    def action(self):
        return int(self.frame.actions[self.agent])

    def _co(self, frame):
        return np.nonzero(frame.members[self.agent])[0]

    @property
    def co_states(self):
        return self.frame.obs[self._co(self.frame)]

    @property
    def co_actions(self):
        return self.frame.actions[self._co(self.frame)]

    @property
    def next_state(self):
        return None if self.terminal else self.next_frame.obs[self.agent]

    @property
    def next_co_states(self):
        return None if self.terminal else self.next_frame.obs[self._co(self.next_frame)]

    @property
    def next_co_actions(self):
        # co-agents at t+1, paired with the actions they took at t
        return None if self.terminal else self.frame.actions[self._co(self.next_frame)]

    def materialize(self) -> Transition:
        return Transition(self.state, self.action, self.co_states, self.co_actions, self.reward,
                          self.next_state, self.next_co_states, self.next_co_actions, self.terminal)


def round_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def train_battle_selfplay(cfg, progress=None) -> TrainResult:
    """Both armies act through one shared model; transitions pool into one buffer."""
    if cfg.environment != "battle":
        raise ConfigurationError("train_battle_selfplay needs environment: battle")
    env = cfg.battle_config()
    learner = make_learner(cfg, env.state_dim, env.n_actions, battle=env)
    act_rng, sample_rng, _ = _streams(cfg.seed)
    buffer = ReplayBuffer(cfg.buffer_capacity, sample_rng)
    policy = LearnerPolicy(learner, radius=cfg.radius)
    result = TrainResult([learner], BATTLE_COLUMNS)

    for rnd in range(cfg.rounds):
        policy.epsilon = cfg.epsilon.value(rnd)
        pending: list = []

        def on_step(before, after, view, actions, rewards):
            frame = _Frame(view.obs, actions, view.members)
            # previous step's transitions now learn their successor frame
            for tr in pending:
                tr.next_frame = frame
            pending.clear()
            done = battle.is_done(after, env)[0]
            for i in np.nonzero(before.alive)[0]:
                terminal = done or not after.alive[i]
                tr = FrameTransition(frame, None, int(i), float(rewards[i]), terminal)
                buffer.add(tr)
                if not terminal:
                    pending.append(tr)

        record = run_episode(env, round_seed(cfg.seed, rnd), {1: policy, 2: policy}, act_rng,
                             radius=cfg.radius, on_step=on_step)
        _train_steps(learner, buffer, cfg)
        if rnd % cfg.eval_every == 0 or rnd == cfg.rounds - 1:
            m = battle.episode_metrics(record, log)
            row = {"round": rnd}
            for key in ("killing_index", "mean_rewards", "total_rewards"):
                for g in (1, 2):
                    row[f"{key}_{g}"] = m[g][key]
            result.curve.append(row)
            if progress is not None:
                progress(rnd, row)
    return result


def train(cfg, progress=None) -> TrainResult:
    if cfg.environment == "squeeze":
        return train_squeeze(cfg, progress)
    return train_battle_selfplay(cfg, progress)
