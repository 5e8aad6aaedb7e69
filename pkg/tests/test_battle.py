import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fqlearn.envs import battle
from fqlearn.envs.battle import BattleConfig, GridState
from fqlearn.errors import ConfigurationError, InputError, QueryError

N, NE, E, SE, S, SW, W, NW = range(8)
ATTACK = 8


def custom(config, placements, hp=None, seed=0):
    """State with agents at ``placements`` [(x, y, group), ...]."""
    pos = np.array([(x, y) for x, y, _ in placements], dtype=np.int64)
    group = np.array([g for _, _, g in placements], dtype=np.int64)
    n = len(placements)
    return GridState(pos, np.full(n, config.max_hp) if hp is None else np.asarray(hp, float),
                     group, np.ones(n, bool), np.full(n, -1, dtype=np.int64), np.zeros(n), 0,
                     np.random.default_rng(seed))


def small(n_per_army=1, **kw):
    base = dict(width=5, height=5, n_per_army=n_per_army, view=3, spawn_gap=0)
    base.update(kw)
    return BattleConfig(**base)


# reset -------------------------------------------------------------------------

def test_reset_one_per_side_mirrored():
    cfg = small()
    s = battle.reset(cfg, 0)
    (x1, y1), (x2, y2) = s.pos
    assert y1 == y2 and x1 == cfg.width - 1 - x2
    assert np.all(s.hp == cfg.max_hp) and np.all(s.alive)
    assert list(s.group) == [1, 2]


def test_reset_deterministic():
    cfg = BattleConfig()
    assert battle.reset(cfg, 5) == battle.reset(cfg, 5)


def test_reset_army_too_big():
    with pytest.raises(ConfigurationError):
        battle.reset(small(n_per_army=40), 0)


def test_default_formation_fits_and_is_distinct():
    cfg = BattleConfig()
    s = battle.reset(cfg, 0)
    assert len({tuple(p) for p in s.pos}) == cfg.n_agents
    assert np.all((s.pos >= 0) & (s.pos < 30))


@pytest.mark.parametrize("kw", [dict(view=4), dict(neighbor_radius=0), dict(max_hp=0)])
def test_config_invariants(kw):
    with pytest.raises(ConfigurationError):
        BattleConfig(**kw)


def test_action_decoding():
    assert battle.decode_action(0) == ("move", 0)
    assert battle.decode_action(15) == ("attack", 7)
    with pytest.raises(InputError):
        battle.decode_action(17)
    assert BattleConfig().n_actions == 16
    assert BattleConfig(allow_idle=True).n_actions == 17


# observe -----------------------------------------------------------------------

def test_lone_agent_sees_only_itself():
    cfg = BattleConfig(width=9, height=9, n_per_army=1, view=5)
    s = custom(cfg, [(4, 4, 1)])
    s.alive = np.array([True])
    o = battle.observe(s, cfg, 0).spatial
    assert o[:, :, 0].sum() == 0
    assert o[:, :, 1].sum() == 1 and o[2, 2, 1] == 1 and o[2, 2, 2] == 1.0
    assert o[:, :, 3].sum() == 0 and o[:, :, 4].sum() == 0


def test_enemy_east():
    cfg = BattleConfig(width=9, height=9, n_per_army=1, view=5)
    s = custom(cfg, [(4, 4, 1), (5, 4, 2)], hp=[10.0, 4.0])
    o = battle.observe(s, cfg, 0).spatial
    assert o[2, 3, 3] == 1.0 and o[2, 3, 4] == 0.4
    assert o[:, :, 3].sum() == 1


def test_army_two_sees_itself_as_friendly():
    cfg = BattleConfig(width=9, height=9, n_per_army=1, view=5)
    s = custom(cfg, [(4, 4, 1), (5, 4, 2)])
    o = battle.observe(s, cfg, 1).spatial
    assert o[2, 2, 1] == 1 and o[2, 1, 3] == 1


def test_corner_out_of_bounds_quadrant():
    cfg = BattleConfig(width=9, height=9, n_per_army=1, view=5)
    s = custom(cfg, [(0, 0, 1), (8, 8, 2)])
    oob = battle.observe(s, cfg, 0).spatial[:, :, 0]
    expect = np.ones((5, 5))
    expect[2:, 2:] = 0  # rows y >= 0 and columns x >= 0 lie inside the map
    np.testing.assert_array_equal(oob, expect)


def test_features_and_dead_query():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (3, 3, 2)])
    s.last_action[:] = [5, -1]
    s.last_reward[:] = [0.25, 0.0]
    f = battle.observe(s, cfg, 0).features
    assert f.shape == (2 + 16 + 1,)
    assert f[0] == 1 and f[1] == 0 and f[2 + 5] == 1 and f[2:18].sum() == 1 and f[-1] == 0.25
    s.alive[1] = False
    with pytest.raises(QueryError):
        battle.observe(s, cfg, 1)


def test_observe_all_matches_single():
    cfg = BattleConfig()
    s = battle.reset(cfg, 0)
    flat = battle.observe_all(s, cfg)
    assert flat.shape == (cfg.n_agents, cfg.state_dim)
    for i in (0, 7, 20):
        np.testing.assert_array_equal(flat[i], battle.observe(s, cfg, i).flat())


# step ----------------------------------------------------------------------------

def test_all_blocked_moves_keep_positions():
    cfg = small()
    s = custom(cfg, [(0, 0, 1), (4, 4, 2)])
    new, r, ev = battle.step(s, cfg, [NW, SE])
    np.testing.assert_array_equal(new.pos, s.pos)
    np.testing.assert_array_equal(r, [cfg.step_reward] * 2)
    assert ev.blocked == [0, 1]


def test_move_into_occupied_cell_blocked():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (2, 1, 1), (4, 4, 2)])
    new, _, ev = battle.step(s, cfg, [E, N, N])
    assert tuple(new.pos[0]) == (1, 1) and tuple(new.pos[1]) == (2, 0)
    assert 0 in ev.blocked


def test_contested_cell_single_winner():
    cfg = small()
    s = custom(cfg, [(1, 2, 1), (3, 2, 2)], seed=3)
    new, _, ev = battle.step(s, cfg, [E, W])
    cells = {tuple(p) for p in new.pos}
    assert len(cells) == 2 and (2, 2) in cells
    assert len(ev.moves) == 1 and len(ev.blocked) == 1


def test_lethal_attack_rewards():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (2, 1, 2)], hp=[10.0, 2.0])
    new, r, ev = battle.step(s, cfg, [ATTACK + E, N])
    assert not new.alive[1] and new.alive[0]
    assert r[0] == pytest.approx(cfg.step_reward + cfg.hit_reward + cfg.kill_reward)
    assert r[1] == pytest.approx(cfg.step_reward + cfg.death_reward)
    assert ev.kills == [(0, 1)]


def test_mutual_lethal_attack_kills_both():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (2, 1, 2)], hp=[2.0, 2.0])
    new, r, _ = battle.step(s, cfg, [ATTACK + E, ATTACK + W])
    assert not new.alive.any()
    expect = cfg.step_reward + cfg.hit_reward + cfg.kill_reward + cfg.death_reward
    np.testing.assert_allclose(r, [expect, expect])


def test_empty_and_friendly_attacks_are_penalised():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (2, 1, 1), (4, 4, 2)])
    _, r, ev = battle.step(s, cfg, [ATTACK + E, ATTACK + N, N])
    np.testing.assert_allclose(r[:2], cfg.step_reward + cfg.empty_attack_reward)
    assert ev.empty_attacks == [0, 1]


def test_dead_cannot_move_and_freed_cell_is_taken():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (2, 1, 2), (3, 1, 1)], hp=[10.0, 2.0, 10.0])
    new, _, _ = battle.step(s, cfg, [ATTACK + E, E, W])
    assert not new.alive[1]
    assert tuple(new.pos[2]) == (2, 1)


def test_missing_action_rejected():
    cfg = small()
    s = custom(cfg, [(1, 1, 1), (3, 3, 2)])
    with pytest.raises(InputError):
        battle.step(s, cfg, {0: N})
    with pytest.raises(InputError):
        battle.step(s, cfg, [N, 16])
    with pytest.raises(InputError):
        battle.step(s, cfg, [N, N, N])


def test_idle_action_when_enabled():
    cfg = small(allow_idle=True)
    s = custom(cfg, [(1, 1, 1), (3, 3, 2)])
    new, r, _ = battle.step(s, cfg, [battle.IDLE, battle.IDLE])
    np.testing.assert_array_equal(new.pos, s.pos)
    np.testing.assert_array_equal(r, [cfg.step_reward] * 2)


def test_step_does_not_mutate_input():
    cfg = BattleConfig()
    s = battle.reset(cfg, 0)
    before = s.copy()
    battle.step(s, cfg, np.zeros(cfg.n_agents, dtype=int))
    assert s == before


def random_rollout(cfg, seed, steps):
    s = battle.reset(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    yield s
    for _ in range(steps):
        s, _, _ = battle.step(s, cfg, rng.integers(cfg.n_actions, size=cfg.n_agents))
        yield s


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_occupancy_and_conservation(seed):
    cfg = BattleConfig(width=10, height=10, n_per_army=6, view=5, spawn_gap=1, damage=5)
    prev = None
    for s in random_rollout(cfg, seed, 30):
        alive = s.pos[s.alive]
        assert len({tuple(p) for p in alive}) == len(alive)
        assert np.all((s.hp >= 0) & (s.hp <= cfg.max_hp))
        np.testing.assert_array_equal(s.alive, s.hp > 0)
        if prev is not None:
            assert not np.any(s.alive & ~prev.alive)
        prev = s


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_outcome_independent_of_agent_order(seed):
    """Relabel agents; the simulation must follow the relabelling exactly."""
    cfg = BattleConfig(width=10, height=10, n_per_army=5, view=5, spawn_gap=1, damage=5)
    rng = np.random.default_rng(seed)
    s = battle.reset(cfg, seed)
    acts = rng.integers(cfg.n_actions, size=cfg.n_agents)
    perm = rng.permutation(cfg.n_agents)
    p = GridState(s.pos[perm], s.hp[perm], s.group[perm], s.alive[perm], s.last_action[perm],
                  s.last_reward[perm], 0, np.random.default_rng(seed))
    a, ra, _ = battle.step(s, cfg, acts)
    b, rb, _ = battle.step(p, cfg, acts[perm])
    np.testing.assert_array_equal(a.hp[perm], b.hp)
    np.testing.assert_array_equal(a.alive[perm], b.alive)
    np.testing.assert_array_equal(ra[perm], rb)


def test_contest_resolution_keyed_by_agent_id():
    cfg = small()
    s = custom(cfg, [(1, 2, 1), (3, 2, 2)], seed=9)
    a, _, _ = battle.step(s, cfg, [E, W])
    s2 = custom(cfg, [(1, 2, 1), (3, 2, 2)], seed=9)
    b, _, _ = battle.step(s2, cfg, {1: W, 0: E})
    np.testing.assert_array_equal(a.pos, b.pos)


def test_determinism_same_seed():
    cfg = BattleConfig(width=12, height=12, n_per_army=6, view=5)
    a = list(random_rollout(cfg, 3, 20))[-1]
    b = list(random_rollout(cfg, 3, 20))[-1]
    assert a == b


# neighbours and termination ---------------------------------------------------------

def test_neighbors_radius_zero():
    cfg = BattleConfig()
    s = battle.reset(cfg, 0)
    assert battle.neighbor_agents(s, 0, 0) == []


def test_neighbors_threshold():
    cfg = BattleConfig(n_per_army=3)
    s = custom(cfg, [(0, 0, 1), (5, 0, 1), (20, 0, 1), (29, 29, 2)])
    assert battle.neighbor_agents(s, 0, 13) == [1]
    assert battle.neighbor_agents(s, 0, "all") == [1, 2]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 30))
def test_neighbors_symmetric(seed, radius):
    cfg = BattleConfig(width=12, height=12, n_per_army=6, view=5)
    s = list(random_rollout(cfg, seed, 5))[-1]
    m = battle.neighbor_matrix(s, radius)
    np.testing.assert_array_equal(m, m.T)
    for i in np.nonzero(s.alive)[0]:
        assert battle.neighbor_agents(s, int(i), radius) == list(np.nonzero(m[i])[0])


def test_is_done_cases():
    cfg = small(max_steps=10)
    s = custom(cfg, [(1, 1, 1), (3, 3, 2)])
    assert battle.is_done(s, cfg) == (False, None)
    s.alive[1] = False
    assert battle.is_done(s, cfg) == (True, 1)
    s.alive[1] = True
    s.step_count = 10
    assert battle.is_done(s, cfg) == (True, 0)


# metrics and replays --------------------------------------------------------------------

def record_of(group, rewards, survival, alive_end):
    return battle.EpisodeRecord(np.array(group), np.array(rewards, float), np.array(survival),
                                np.array(alive_end, bool), 10, 0)


def test_mean_rewards_example():
    m = battle.episode_metrics(record_of([1, 1, 2], [10, 20, 0], [5, 10, 1], [1, 1, 1]))
    assert m[1]["mean_rewards"] == 2.0


def test_total_rewards_example():
    m = battle.episode_metrics(record_of([1, 1, 1, 2], [1, -2, 4, 0], [3, 3, 3, 3], [1, 1, 1, 1]))
    assert m[1]["total_rewards"] == 3.0


def test_no_deaths_zero_kills():
    m = battle.episode_metrics(record_of([1, 2], [0, 0], [1, 1], [1, 1]))
    assert m[1]["killing_index"] == m[2]["killing_index"] == 0


def test_killing_index_counts_enemy_deaths():
    m = battle.episode_metrics(record_of([1, 1, 2, 2, 2], [0] * 5, [1] * 5, [0, 1, 0, 0, 1]))
    assert m[1]["killing_index"] == 2 and m[2]["killing_index"] == 1


def test_zero_survival_excluded_with_warning(caplog):
    log = logging.getLogger("battle-test")
    with caplog.at_level(logging.WARNING):
        m = battle.episode_metrics(record_of([1, 1, 2], [4, 7, 0], [2, 0, 1], [1, 0, 1]), log)
    assert m[1]["mean_rewards"] == 2.0
    assert "zero survival" in caplog.text


def test_replay_round_trip(tmp_path):
    cfg = BattleConfig(width=10, height=10, n_per_army=4, view=5, max_steps=25, spawn_gap=1)
    s = battle.reset(cfg, 11)
    rec = battle.new_record(s)
    rng = np.random.default_rng(0)
    while not battle.is_done(s, cfg)[0]:
        acts = np.where(s.alive, rng.integers(cfg.n_actions, size=cfg.n_agents), -1)
        after, r, _ = battle.step(s, cfg, acts)
        battle.record_step(rec, s, after, r, acts)
        s = after
    rec.winner = battle.is_done(s, cfg)[1]
    path = tmp_path / "ep.json"
    battle.write_replay(path, cfg, 11, rec)
    final, again = battle.replay(path)
    assert final == s
    np.testing.assert_array_equal(again.total_reward, rec.total_reward)
    np.testing.assert_array_equal(again.survival, rec.survival)
    assert again.winner == rec.winner
