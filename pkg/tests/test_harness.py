import json
from datetime import datetime, timezone

import numpy as np
import pytest

from fqlearn import config, training
from fqlearn.agents import load_learner
from fqlearn.coset import CoSet
from fqlearn.cli import main
from fqlearn.envs import battle
from fqlearn.errors import ConfigurationError, InputError
from fqlearn.episodes import AttackAdjacentPolicy, IdlePolicy, RandomPolicy
from fqlearn.evaluation import cross_play, summarize
from fqlearn.persistence import CURVE_FILE, MANIFEST_FILE, read_curve, save_run
from fqlearn.replay import ReplayBuffer

TINY_BATTLE = dict(width=8, height=8, n_per_army=2, view=3, spawn_gap=1, max_steps=12)


def tiny_battle_cfg(**kw):
    base = dict(environment="battle", battle=TINY_BATTLE, rounds=3, batch_size=8,
                network={"hidden": [8]}, fql={"embed_dim": 4}, eval_every=1)
    base.update(kw)
    return config.parse(base)


# replay ----------------------------------------------------------------------------

def test_replay_sampling_is_uniform():
    buf = ReplayBuffer(1000, 0)
    buf.extend(range(1000))
    counts = np.bincount(buf.sample(100_000), minlength=1000)
    # Pearson statistic over 1000 cells: mean 999, sd sqrt(2 * 999)
    chi2 = float(np.sum((counts - 100.0) ** 2 / 100.0))
    assert abs(chi2 - 999) <= 3 * np.sqrt(2 * 999)


def test_replay_capacity_drops_oldest():
    buf = ReplayBuffer(3)
    buf.extend(range(5))
    assert len(buf) == 3 and sorted(buf.items) == [2, 3, 4]
    assert set(buf.sample(200)) == {2, 3, 4}


def test_replay_errors():
    with pytest.raises(ConfigurationError):
        ReplayBuffer(0)
    with pytest.raises(ConfigurationError):
        ReplayBuffer(4).sample(1)


# config ------------------------------------------------------------------------------

def test_epsilon_schedule():
    s = config.EpsilonSchedule(start=1.0, end=0.1, decay_steps=10)
    assert s.value(0) == 1.0 and s.value(5) == pytest.approx(0.55) and s.value(10) == 0.1
    assert s.value(10_000) == 0.1
    assert config.EpsilonSchedule(start=1.0, end=0.2, decay_steps=0).value(0) == 0.2


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        config.parse({"learning_rate": 0.1})
    with pytest.raises(ConfigurationError):
        config.parse({"optimizer": {"momentum": 0.9}})


@pytest.mark.parametrize("gamma", [1.0, -0.1, 1.5])
def test_config_rejects_bad_gamma(gamma):
    with pytest.raises(ConfigurationError):
        config.parse({"gamma": gamma})


def test_config_rejects_bad_radius_and_shapes():
    with pytest.raises(ConfigurationError):
        config.parse({"neighbor_radius": 0})
    with pytest.raises(ConfigurationError):
        config.parse({"environment": "battle", "battle": {"view": 4}})


def test_config_yaml_round_trip(tmp_path):
    cfg = tiny_battle_cfg(seed=5)
    p = tmp_path / "c.yaml"
    p.write_text(config.dump(cfg))
    assert config.load(p) == cfg


# training ------------------------------------------------------------------------------

def squeeze_cfg(**kw):
    base = dict(environment="squeeze", squeeze={"n_agents": 1}, rounds=1500, batch_size=16,
                network={"hidden": [16]}, fql={"embed_dim": 4}, optimizer={"lr": 1e-2},
                epsilon={"start": 1.0, "end": 0.0, "decay_steps": 1000}, target_sync=50)
    base.update(kw)
    return config.parse(base)


@pytest.mark.parametrize("algo", ["fql", "iql"])
def test_single_agent_squeeze_learns_largest_action(algo):
    res = training.train(squeeze_cfg(algorithm=algo))
    learner = res.learners[0]
    co = CoSet.build([()], [()], 1)
    assert int(learner.greedy(np.zeros((1, 1)), co)[0]) == 9


def test_squeeze_training_deterministic():
    a = training.train(squeeze_cfg(rounds=100))
    b = training.train(squeeze_cfg(rounds=100))
    for c in a.columns:
        np.testing.assert_array_equal(a.column(c), b.column(c))
    assert a.learners[0].model.q_net.params.tobytes() == b.learners[0].model.q_net.params.tobytes()


def test_self_play_keeps_one_model_and_its_target():
    res = training.train(tiny_battle_cfg(rounds=1))
    assert len(res.learners) == 1
    nets = res.learners[0].networks()
    assert {k for k in nets if k.startswith("target_")} == {"target_" + k for k in nets
                                                           if not k.startswith("target_")}


def test_pair_army_stores_exactly_one_co_agent(monkeypatch):
    stored = []

    class Spy(ReplayBuffer):
        def add(self, item):
            stored.append(item)
            super().add(item)

    monkeypatch.setattr(training, "ReplayBuffer", Spy)
    training.train(tiny_battle_cfg(rounds=2, neighbor_radius="all"))
    assert stored
    for tr in stored:
        t = tr.materialize()
        assert len(t.co_actions) == 1 and t.co_states.shape == (1, t.state.size)
        if not t.terminal:
            assert len(t.next_co_actions) == len(t.next_co_states)


def test_battle_curve_columns_and_round_symmetry():
    res = training.train(tiny_battle_cfg(rounds=2))
    assert res.columns == training.BATTLE_COLUMNS
    assert [r["round"] for r in res.curve] == [0, 1]
    s = battle.reset(config.parse({"environment": "battle"}).battle_config(), 0)
    ones, twos = s.pos[s.group == 1], s.pos[s.group == 2]
    mirrored = {(29 - x, y) for x, y in ones}
    assert mirrored == {tuple(p) for p in twos}


# cross-play ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    cfg = tiny_battle_cfg(rounds=2)
    run = save_run(training.train(cfg), cfg, root, now=datetime(2026, 1, 1, tzinfo=timezone.utc))
    return run, cfg


def test_model_against_itself_is_even(trained):
    run, _ = trained
    ck = run / "checkpoints" / "group1"
    rep = cross_play(ck, ck, battles=10, seed=0)
    assert rep.a.win_rate + rep.b.win_rate == pytest.approx(1.0)
    assert rep.a.wins + rep.b.wins + rep.draws == 10


def test_attacker_beats_idle():
    cfg = battle.BattleConfig(width=6, height=6, n_per_army=2, view=3, spawn_gap=0, allow_idle=True,
                              max_steps=60)
    rep = cross_play(AttackAdjacentPolicy(), IdlePolicy(), battles=6, seed=0, config=cfg)
    assert rep.a.wins == 6 and rep.a.win_rate == 1.0


def test_zero_battles_rejected():
    cfg = battle.BattleConfig(**TINY_BATTLE)
    with pytest.raises(InputError):
        cross_play(RandomPolicy(), RandomPolicy(), battles=0, config=cfg)
    with pytest.raises(InputError):
        summarize([])


def test_parallel_matches_serial():
    cfg = battle.BattleConfig(**TINY_BATTLE)
    serial = cross_play(RandomPolicy(), AttackAdjacentPolicy(), battles=8, seed=3, config=cfg)
    threaded = cross_play(RandomPolicy(), AttackAdjacentPolicy(), battles=8, seed=3, config=cfg,
                          workers=4)
    assert serial.to_dict() == threaded.to_dict()


def test_incompatible_checkpoints_rejected(trained, tmp_path):
    run, _ = trained
    other = tiny_battle_cfg(rounds=1, battle={**TINY_BATTLE, "view": 5})
    run2 = save_run(training.train(other), other, tmp_path)
    with pytest.raises(ConfigurationError):
        cross_play(run / "checkpoints" / "group1", run2 / "checkpoints" / "group1", battles=1)
    sq = squeeze_cfg(rounds=2)
    run3 = save_run(training.train(sq), sq, tmp_path)
    with pytest.raises(ConfigurationError):
        cross_play(run / "checkpoints" / "group1", run3 / "checkpoints" / "group1", battles=1)


# persistence ----------------------------------------------------------------------------

def test_runs_are_byte_reproducible(tmp_path):
    cfg = tiny_battle_cfg(rounds=2, seed=7)
    when = datetime(2026, 1, 1, tzinfo=timezone.utc)
    a = save_run(training.train(cfg), cfg, tmp_path / "a", now=when)
    b = save_run(training.train(cfg), cfg, tmp_path / "b", now=when)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        if f.name != MANIFEST_FILE:
            assert (a / f).read_bytes() == (b / f).read_bytes(), f
    ma, mb = (json.loads((d / MANIFEST_FILE).read_text()) for d in (a, b))
    ma.pop("created"), mb.pop("created")
    assert ma == mb and ma["seed"] == 7


def test_checkpoint_reload_gives_same_policy(trained):
    run, cfg = trained
    learner = load_learner(run / "checkpoints" / "group1")
    assert learner.meta["environment"] == "battle"
    rows = read_curve(run / CURVE_FILE)
    assert [int(r["round"]) for r in rows] == [0, 1]


def test_run_directory_never_reused(tmp_path):
    cfg = squeeze_cfg(rounds=1)
    when = datetime(2026, 1, 1, tzinfo=timezone.utc)
    res = training.train(cfg)
    assert save_run(res, cfg, tmp_path, now=when) != save_run(res, cfg, tmp_path, now=when)


# cli ------------------------------------------------------------------------------------

def test_cli_oracle(capsys):
    assert main(["oracle"]) == 0
    x, r = capsys.readouterr().out.split()
    assert int(x) == 445 and float(r) == pytest.approx(423.03, abs=0.01)


def test_cli_grad_check(capsys):
    assert main(["grad-check", "--instances", "2"]) == 0


def test_cli_usage_errors(capsys):
    assert main(["frobnicate"]) == 1
    assert main(["cross-play", "only-one"]) == 1
    assert main(["eval", "/nonexistent/checkpoint"]) == 1


def test_cli_train_and_eval(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(config.dump(squeeze_cfg(rounds=3)))
    assert main(["train", str(cfg), "--out", str(tmp_path / "runs"), "-q"]) == 0
    run = capsys.readouterr().out.strip().splitlines()[-1]
    assert main(["eval", f"{run}/checkpoints/group1", "--episodes", "2"]) == 0
    assert "ratio" in capsys.readouterr().out


def test_cli_bad_config_value(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("gamma: 2.0\n")
    assert main(["train", str(cfg), "--out", str(tmp_path)]) == 1
