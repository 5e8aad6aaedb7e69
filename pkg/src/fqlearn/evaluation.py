"""Evaluation: cross-play tournaments between battle policies and greedy squeeze play."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import Learner, load_learner
from .coset import CoSet
from .envs import battle, squeeze
from .envs.battle import BattleConfig
from .episodes import LearnerPolicy, Policy, run_episode
from .errors import ConfigurationError, InputError
from .training import round_seed

METRICS = ("killing_index", "mean_rewards", "total_rewards")


@dataclass
class SideSummary:
    """Mean and standard deviation of each battle metric for one contestant."""
    mean: dict[str, float]
    std: dict[str, float]
    wins: int
    win_rate: float


@dataclass
class EvalReport:
    battles: int
    draws: int
    a: SideSummary
    b: SideSummary
    episodes: list[dict] = field(default_factory=list)
    curve: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        side = lambda s: {"mean": s.mean, "std": s.std, "wins": s.wins, "win_rate": s.win_rate}
        return {"battles": self.battles, "draws": self.draws, "a": side(self.a), "b": side(self.b)}


def _policy(contestant) -> tuple[Policy, dict]:
    """Turn a checkpoint path, learner or policy into (policy, environment meta)."""
    if isinstance(contestant, Policy):
        learner = getattr(contestant, "learner", None)
        return contestant, (learner.meta if learner is not None else {})
    if isinstance(contestant, (str, Path)):
        contestant = load_learner(contestant)
    if isinstance(contestant, Learner):
        meta = contestant.meta
        radius = meta.get("neighbor_radius", "all")
        return LearnerPolicy(contestant, 0.0, None if radius == "all" else int(radius)), meta
    raise InputError(f"cannot play {type(contestant).__name__}")


def _resolve_config(metas, config) -> BattleConfig:
    found = []
    for meta in metas:
        if not meta:
            continue
        if meta.get("environment") != "battle":
            raise ConfigurationError("cross-play needs battle checkpoints")
        found.append(meta["battle"])
    if any(f != found[0] for f in found[1:]):
        raise ConfigurationError("checkpoints were trained on different battle configs")
    if config is None:
        if not found:
            raise ConfigurationError("no battle config given and none stored with the contestants")
        return BattleConfig(**found[0])
    if found:
        mine = {k: v for k, v in config.to_dict().items() if k != "neighbor_radius"}
        if mine != found[0]:
            raise ConfigurationError("battle config differs from the one the checkpoints used")
    return config


def play_one(config: BattleConfig, policy_a: Policy, policy_b: Policy, seed: int, k: int) -> dict:
    """Episode ``k``: A takes army 1 on even episodes and army 2 on odd ones."""
    side_a = 1 if k % 2 == 0 else 2
    side_b = 3 - side_a
    rng = np.random.default_rng([seed, k])
    record = run_episode(config, round_seed(seed, k), {side_a: policy_a, side_b: policy_b}, rng)
    m = battle.episode_metrics(record)
    row = {"episode": k, "side_a": side_a, "steps": record.steps,
           "winner": "draw" if record.winner == 0 else ("a" if record.winner == side_a else "b")}
    for key in METRICS:
        row[f"{key}_a"] = m[side_a][key]
        row[f"{key}_b"] = m[side_b][key]
    return row


def summarize(rows: list[dict]) -> EvalReport:
    """Aggregate episode rows; independent of the order they arrive in."""
    rows = sorted(rows, key=lambda r: r["episode"])
    n = len(rows)
    if n == 0:
        raise InputError("no battles to aggregate")
    draws = sum(r["winner"] == "draw" for r in rows)

    def side(tag):
        vals = {key: np.array([r[f"{key}_{tag}"] for r in rows], dtype=np.float64) for key in METRICS}
        wins = sum(r["winner"] == tag for r in rows)
        return SideSummary({k: float(v.mean()) for k, v in vals.items()},
                           {k: float(v.std()) for k, v in vals.items()},
                           wins, (wins + 0.5 * draws) / n)

    return EvalReport(n, draws, side("a"), side("b"), rows)


def cross_play(a, b, battles: int = 100, seed: int = 0, config: BattleConfig | None = None,
               workers: int = 1) -> EvalReport:
    """Greedy A-vs-B battles with sides alternated every episode.

    ``a`` and ``b`` may be checkpoint directories, learners or policies. The
    battle config comes from the checkpoints unless given explicitly.
    """
    if battles < 1:
        raise InputError("cross-play needs at least one battle")
    (pa, ma), (pb, mb) = _policy(a), _policy(b)
    config = _resolve_config([ma, mb], config)
    for p in (pa, pb):
        learner = getattr(p, "learner", None)
        if learner is not None and learner.state_dim != config.state_dim:
            raise ConfigurationError("checkpoint observation size does not match the battle config")
    run = lambda k: play_one(config, pa, pb, seed, k)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(run, range(battles)))
    else:
        rows = [run(k) for k in range(battles)]
    return summarize(rows)


def evaluate_squeeze(learner: Learner, env, episodes: int = 10) -> list[float]:
    """Greedy play from an empty action history; one reward per episode."""
    if episodes < 1:
        raise InputError("need at least one episode")
    n = env.n_agents
    state = squeeze.observe(env, 0)
    states = np.repeat(state[None, :], n, axis=0)
    last = np.full(n, -1, dtype=np.int64)
    rewards = []
    for _ in range(episodes):
        co = CoSet.all_others(state, last) if n > 1 else CoSet.build([()], [()], 1)
        last = learner.greedy(states, co)
        rewards.append(squeeze.step(env, last).reward)
    return rewards
