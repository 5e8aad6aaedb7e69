"""Two-army gridworld battle.

Each soldier either moves to or attacks one of its eight neighbouring cells.
A step resolves all attacks simultaneously against the pre-step positions,
removes the dead, then resolves moves; contested cells go to the mover with the
highest seeded priority, which depends on (step key, cell, agent id) only, so
the outcome never depends on iteration order.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from math import ceil, sqrt
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, InputError, QueryError

# (dx, dy) with y growing downwards: N, NE, E, SE, S, SW, W, NW
DIRECTIONS = np.array([(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)])
N_CHANNELS = 5  # out-of-bounds, friend, friend hp, enemy, enemy hp
IDLE = 16


@dataclass(frozen=True)
class BattleConfig:
    width: int = 30
    height: int = 30
    n_per_army: int = 16
    view: int = 13
    max_hp: float = 10.0
    damage: float = 2.0
    step_reward: float = -0.005
    hit_reward: float = 0.2
    kill_reward: float = 5.0
    death_reward: float = -0.1
    empty_attack_reward: float = -0.1
    max_steps: int = 200
    neighbor_radius: int = 13
    spawn_gap: int = 6
    allow_idle: bool = False

    def __post_init__(self):
        if self.view < 1 or self.view % 2 == 0:
            raise ConfigurationError("view window side must be odd")
        if self.neighbor_radius <= 0:
            raise ConfigurationError("neighbour radius must be positive")
        if self.n_per_army < 1 or self.max_steps < 1 or self.max_hp <= 0 or self.damage <= 0:
            raise ConfigurationError("army size, episode length, hp and damage must be positive")
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("map must be non-empty")

    @property
    def n_actions(self) -> int:
        return 17 if self.allow_idle else 16

    @property
    def n_agents(self) -> int:
        return 2 * self.n_per_army

    @property
    def state_dim(self) -> int:
        return self.view * self.view * N_CHANNELS + 2 + self.n_actions + 1

    def to_dict(self) -> dict:
        return asdict(self)


def decode_action(action: int) -> tuple[str, int]:
    """Map an action id to (kind, direction index)."""
    if 0 <= action < 8:
        return "move", action
    if 8 <= action < 16:
        return "attack", action - 8
    if action == IDLE:
        return "idle", -1
    raise InputError(f"unknown action {action}")


@dataclass
class GridState:
    pos: np.ndarray          # (n, 2) int (x, y)
    hp: np.ndarray           # (n,)
    group: np.ndarray        # (n,) 1 or 2
    alive: np.ndarray        # (n,) bool
    last_action: np.ndarray  # (n,) int, -1 before the first step
    last_reward: np.ndarray  # (n,)
    step_count: int
    rng: np.random.Generator

    def copy(self) -> "GridState":
        return copy.deepcopy(self)

    def __eq__(self, other):
        if not isinstance(other, GridState):
            return NotImplemented
        arrays = ("pos", "hp", "group", "alive", "last_action", "last_reward")
        return (self.step_count == other.step_count
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and self.rng.bit_generator.state == other.rng.bit_generator.state)


@dataclass
class StepEvents:
    hits: list = field(default_factory=list)     # (attacker, target)
    kills: list = field(default_factory=list)    # (attacker, victim)
    deaths: list = field(default_factory=list)
    moves: list = field(default_factory=list)    # (agent, (x, y) from, (x, y) to)
    blocked: list = field(default_factory=list)
    empty_attacks: list = field(default_factory=list)


def formation(config: BattleConfig) -> np.ndarray:
    """Mirrored rectangular blocks: army 1 on the left, army 2 reflected onto the right."""
    n = config.n_per_army
    rows = ceil(sqrt(n))
    cols = ceil(n / rows)
    spare = config.width - 2 * cols
    if spare < 0 or rows > config.height:
        raise ConfigurationError(f"{n} soldiers per army do not fit a {config.width}x{config.height} map")
    gap = min(config.spawn_gap, spare)
    if (spare - gap) % 2:
        gap = gap - 1 if gap >= 1 else gap + 1
    left = (spare - gap) // 2
    top = (config.height - rows) // 2
    k = np.arange(n)
    # front column first so that small armies stand close to the centre
    x1 = left + cols - 1 - k // rows
    y1 = top + k % rows
    army1 = np.stack([x1, y1], axis=1)
    army2 = np.stack([config.width - 1 - x1, y1], axis=1)
    return np.concatenate([army1, army2]).astype(np.int64)


def reset(config: BattleConfig, seed: int = 0) -> GridState:
    n = config.n_agents
    return GridState(
        pos=formation(config),
        hp=np.full(n, float(config.max_hp)),
        group=np.repeat([1, 2], config.n_per_army),
        alive=np.ones(n, dtype=bool),
        last_action=np.full(n, -1, dtype=np.int64),
        last_reward=np.zeros(n),
        step_count=0,
        rng=np.random.default_rng(seed),
    )


# observation ---------------------------------------------------------

def _padded_layers(state: GridState, config: BattleConfig) -> np.ndarray:
    r = config.view // 2
    h, w = config.height, config.width
    layers = np.zeros((h + 2 * r, w + 2 * r, 5))
    layers[:, :, 0] = 1.0
    layers[r:r + h, r:r + w, 0] = 0.0
    ids = np.nonzero(state.alive)[0]
    xs, ys = state.pos[ids, 0] + r, state.pos[ids, 1] + r
    g = state.group[ids]
    frac = state.hp[ids] / config.max_hp
    # channels 1,2: army 1 presence/hp; channels 3,4: army 2 presence/hp
    c = np.where(g == 1, 1, 3)
    layers[ys, xs, c] = 1.0
    layers[ys, xs, c + 1] = frac
    return layers


def _window(layers, state, config, agent) -> np.ndarray:
    v = config.view
    x, y = state.pos[agent]
    win = layers[y:y + v, x:x + v]
    if state.group[agent] == 2:
        win = win[:, :, [0, 3, 4, 1, 2]]
    return win


def _features(state: GridState, config: BattleConfig, agents) -> np.ndarray:
    agents = np.asarray(agents)
    out = np.zeros((agents.size, 2 + config.n_actions + 1))
    out[np.arange(agents.size), state.group[agents] - 1] = 1.0
    la = state.last_action[agents]
    has = la >= 0
    out[np.nonzero(has)[0], 2 + la[has]] = 1.0
    out[:, -1] = state.last_reward[agents]
    return out


@dataclass
class AgentObservation:
    spatial: np.ndarray  # (view, view, 5)
    features: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.spatial.ravel(), self.features])


def observe(state: GridState, config: BattleConfig, agent: int) -> AgentObservation:
    if not state.alive[agent]:
        raise QueryError(f"agent {agent} is dead")
    layers = _padded_layers(state, config)
    return AgentObservation(_window(layers, state, config, agent).copy(),
                            _features(state, config, [agent])[0])


def observe_all(state: GridState, config: BattleConfig, agents=None) -> np.ndarray:
    """Flat encodings (spatial block then features) for ``agents`` (default: all alive)."""
    if agents is None:
        agents = np.nonzero(state.alive)[0]
    agents = np.asarray(agents, dtype=np.int64)
    if not np.all(state.alive[agents]):
        raise QueryError("observation requested for a dead agent")
    layers = _padded_layers(state, config)
    spatial = np.stack([_window(layers, state, config, a).ravel() for a in agents]) if agents.size \
        else np.zeros((0, config.view * config.view * N_CHANNELS))
    return np.concatenate([spatial, _features(state, config, agents)], axis=1)


# dynamics ------------------------------------------------------------

_MASK = (1 << 64) - 1


def _mix(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def move_priority(key: int, cell: int, agent: int) -> int:
    return _mix(_mix(_mix(key) ^ cell) ^ agent)


def _joint(actions, n: int) -> np.ndarray:
    if isinstance(actions, dict):
        out = np.full(n, -1, dtype=np.int64)
        for k, a in actions.items():
            out[int(k)] = int(a)
        return out
    out = np.asarray(actions, dtype=np.int64)
    if out.shape != (n,):
        raise InputError(f"expected {n} actions, got shape {out.shape}")
    return out


def step(state: GridState, config: BattleConfig, actions, rng=None):
    """Advance one step; returns (new state, per-agent rewards, events).

    ``actions`` is a mapping agent -> action or a length-n array (entries of dead
    agents are ignored). ``rng`` defaults to the state's own generator; one key
    is drawn from it per step to seed move priorities.
    """
    actions = _joint(actions, len(state.pos))
    new = state.copy()
    rng = new.rng if rng is None else rng
    acting = np.nonzero(state.alive)[0]
    for i in acting:
        a = actions[i]
        if a < 0:
            raise InputError(f"no action for alive agent {i}")
        if a >= config.n_actions:
            raise InputError(f"action {a} outside the action set")
    key = int(rng.integers(0, 2 ** 63))
    n = len(state.pos)
    w, h = config.width, config.height
    rewards = np.zeros(n)
    rewards[acting] += config.step_reward
    events = StepEvents()

    occ = np.full((h, w), -1, dtype=np.int64)
    occ[state.pos[acting, 1], state.pos[acting, 0]] = acting

    damage = np.zeros(n)
    hits = []
    for i in acting:
        kind, d = decode_action(int(actions[i]))
        if kind != "attack":
            continue
        tx, ty = state.pos[i] + DIRECTIONS[d]
        j = occ[ty, tx] if 0 <= tx < w and 0 <= ty < h else -1
        if j >= 0 and state.group[j] != state.group[i]:
            damage[j] += config.damage
            hits.append((int(i), int(j)))
            rewards[i] += config.hit_reward
        else:
            events.empty_attacks.append(int(i))
            rewards[i] += config.empty_attack_reward
    new.hp = np.maximum(state.hp - damage, 0.0)
    died = state.alive & (new.hp <= 0)
    new.alive = state.alive & ~died
    rewards[died] += config.death_reward
    events.hits = hits
    events.deaths = [int(j) for j in np.nonzero(died)[0]]
    for i, j in hits:
        if died[j]:
            rewards[i] += config.kill_reward
            events.kills.append((i, j))

    occ[state.pos[died, 1], state.pos[died, 0]] = -1
    claims: dict[int, list[int]] = {}
    for i in acting:
        if not new.alive[i]:
            continue
        kind, d = decode_action(int(actions[i]))
        if kind != "move":
            continue
        tx, ty = state.pos[i] + DIRECTIONS[d]
        if not (0 <= tx < w and 0 <= ty < h) or occ[ty, tx] >= 0:
            events.blocked.append(int(i))
            continue
        claims.setdefault(int(ty * w + tx), []).append(int(i))
    for cell, movers in sorted(claims.items()):
        winner = max(movers, key=lambda m: move_priority(key, cell, m))
        for m in movers:
            if m != winner:
                events.blocked.append(m)
        old = tuple(int(c) for c in state.pos[winner])
        new.pos[winner] = (cell % w, cell // w)
        events.moves.append((winner, old, (cell % w, cell // w)))
    events.blocked.sort()

    new.last_action[acting] = actions[acting]
    new.last_reward[acting] = rewards[acting]
    new.step_count = state.step_count + 1
    return new, rewards, events


def neighbor_agents(state: GridState, agent: int, radius) -> list[int]:
    """Alive same-army agents within Chebyshev distance ``radius`` (ascending ids)."""
    mates = state.alive & (state.group == state.group[agent])
    mates[agent] = False
    if radius is not None and radius != "all":
        d = np.abs(state.pos - state.pos[agent]).max(axis=1)
        mates &= d <= radius
    return [int(j) for j in np.nonzero(mates)[0]]


def neighbor_matrix(state: GridState, radius=None) -> np.ndarray:
    """(n, n) boolean: [i, j] iff j is an alive same-army neighbour of alive agent i."""
    same = state.group[:, None] == state.group[None, :]
    m = same & state.alive[:, None] & state.alive[None, :]
    np.fill_diagonal(m, False)
    if radius is not None and radius != "all":
        d = np.abs(state.pos[:, None, :] - state.pos[None, :, :]).max(axis=2)
        m &= d <= radius
    return m


def is_done(state: GridState, config: BattleConfig) -> tuple[bool, int | None]:
    """(done, winner) with winner 1 or 2, 0 for a draw, None while running."""
    left = [int(np.sum(state.alive & (state.group == g))) for g in (1, 2)]
    if left[0] == 0 or left[1] == 0 or state.step_count >= config.max_steps:
        if left[0] == left[1]:
            return True, 0
        return True, 1 if left[0] > left[1] else 2
    return False, None


# episode records and metrics -------------------------------------------

@dataclass
class EpisodeRecord:
    group: np.ndarray
    total_reward: np.ndarray   # R_i, summed over the agent's survival
    survival: np.ndarray       # T_i, steps the agent acted
    alive_end: np.ndarray
    steps: int
    winner: int
    actions: list = field(default_factory=list)  # per-step joint actions


def new_record(state: GridState) -> EpisodeRecord:
    n = state.group.size
    return EpisodeRecord(state.group.copy(), np.zeros(n), np.zeros(n, dtype=np.int64),
                         state.alive.copy(), 0, -1)


def record_step(record: EpisodeRecord, before: GridState, after: GridState, rewards, actions) -> None:
    acting = before.alive
    record.total_reward[acting] += rewards[acting]
    record.survival[acting] += 1
    record.alive_end = after.alive.copy()
    record.steps = after.step_count
    record.actions.append([int(a) if ok else -1 for a, ok in zip(actions, acting)])


def episode_metrics(record: EpisodeRecord, log=None) -> dict[int, dict[str, float]]:
    """Per army: enemies killed, mean of R_i / T_i over soldiers, and sum of R_i."""
    out = {}
    for g in (1, 2):
        mine = record.group == g
        enemy_dead = int(np.sum((record.group != g) & ~record.alive_end))
        t = record.survival[mine]
        r = record.total_reward[mine]
        ok = t > 0
        if not np.all(ok) and log is not None:
            log.warning("army %d: %d soldiers with zero survival time left out of mean reward",
                        g, int(np.sum(~ok)))
        n = int(np.sum(ok))
        mean = float(np.sum(r[ok] / t[ok]) / n) if n else 0.0
        out[g] = {"killing_index": enemy_dead, "mean_rewards": mean, "total_rewards": float(np.sum(r))}
    return out


# replay files -------------------------------------------------------------

REPLAY_VERSION = 1


def write_replay(path, config: BattleConfig, seed: int, record: EpisodeRecord) -> None:
    payload = {"version": REPLAY_VERSION, "config": config.to_dict(), "seed": seed,
               "actions": record.actions}
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def replay(path) -> tuple[GridState, EpisodeRecord]:
    """Re-simulate a replay file; returns the final state and a fresh record."""
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != REPLAY_VERSION:
        raise ConfigurationError(f"unsupported replay version {payload.get('version')}")
    config = BattleConfig(**payload["config"])
    state = reset(config, payload["seed"])
    record = new_record(state)
    for joint in payload["actions"]:
        joint = np.asarray(joint, dtype=np.int64)
        after, rewards, _ = step(state, config, joint)
        record_step(record, state, after, rewards, joint)
        state = after
    record.winner = is_done(state, config)[1] if record.actions else -1
    return state, record
