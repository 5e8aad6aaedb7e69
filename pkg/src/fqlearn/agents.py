"""One learner per agent group, with a common interface for the training loops.

A learner owns its online/target models, optimizer state and target-sync
counter. ``act`` works on a whole group at once: a (n, S) state matrix plus a
CoSet of each agent's co-agents paired with their last actions.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import baselines, fql
from .coset import CoSet, collate
from .errors import ConfigurationError
from .nn import OptimizerState, checkpoint, conv_two_stream, mlp

CHECKPOINT_VERSION = 1


def make_net_factory(cfg, state_dim: int, battle=None):
    """Network builder shared by all algorithms for one run config."""
    net = cfg.network
    if net.kind == "mlp" or battle is None:
        def factory(n_out, n_extra, rng):
            return mlp(state_dim + n_extra, net.hidden, n_out, seed=rng)
        return factory
    from .envs.battle import N_CHANNELS
    n_feat = state_dim - battle.view * battle.view * N_CHANNELS

    def factory(n_out, n_extra, rng):
        return conv_two_stream(battle.view, N_CHANNELS, n_feat + n_extra, n_out,
                               conv_channels=tuple(net.conv_channels), kernel=net.kernel,
                               hidden=net.hidden[-1], seed=rng)
    return factory


class Learner:
    algorithm: str
    needs_co = True

    def __init__(self, opt: OptimizerState, target_sync: int, gamma: float):
        fql.check_gamma(gamma)
        self.opt = opt
        self.target_sync = target_sync
        self.gamma = gamma
        self.train_steps = 0
        self.meta: dict = {}  # environment details stored alongside checkpoints

    def q_values(self, states, co: CoSet) -> np.ndarray:
        raise NotImplementedError

    def act(self, states, co: CoSet, epsilon: float, rng) -> np.ndarray:
        return fql.epsilon_greedy(self.q_values(states, co), epsilon, rng)

    def greedy(self, states, co: CoSet) -> np.ndarray:
        return fql.greedy(self.q_values(states, co))

    def _step(self, batch) -> float:
        raise NotImplementedError

    def train(self, transitions) -> float:
        batch = collate(transitions, self.state_dim, with_co=self.needs_co)
        loss = self._step(batch)
        self.train_steps += 1
        if self.train_steps % self.target_sync == 0:
            self.sync()
        return loss

    # persistence -------------------------------------------------------

    def manifest(self) -> dict:
        return {"version": CHECKPOINT_VERSION, "state_dim": self.state_dim,
                "group_id": 1, **self.model.manifest(), "meta": self.meta}

    def networks(self) -> dict:
        raise NotImplementedError

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "manifest.json").write_text(json.dumps(self.manifest(), sort_keys=True, indent=1))
        for name, net in self.networks().items():
            checkpoint.save(net, d / f"{name}.bin")


class FqlLearner(Learner):
    algorithm = "fql"

    def __init__(self, group: fql.GroupModel, opt, target_sync=500, gamma=0.95):
        super().__init__(opt, target_sync, gamma)
        self.group = group
        self.model = group.online
        self.state_dim = group.online.state_dim

    def q_values(self, states, co):
        return self.group.online.q_all_coset(states, co)

    def _step(self, batch):
        return fql.td_train_step(self.group, batch, self.gamma, self.opt)

    def sync(self):
        fql.sync_target(self.group)

    def manifest(self):
        return {**super().manifest(), "group_id": self.group.group_id}

    def networks(self):
        on, tg = self.group.online, self.group.target
        return {"q": on.q_net, "v": on.v_net, "u": on.u_net,
                "target_q": tg.q_net, "target_v": tg.v_net, "target_u": tg.u_net}


class IqlLearner(Learner):
    needs_co = False

    def __init__(self, model: baselines.IqlModel, opt, target_sync=500, gamma=0.95):
        super().__init__(opt, target_sync, gamma)
        self.model = model
        self.state_dim = model.state_dim
        self.algorithm = "diql" if model.dueling else "iql"

    def q_values(self, states, co):
        return self.model.q_all(states)

    def _step(self, batch):
        return baselines.iql_train_step(self.model, batch, self.gamma, self.opt)

    def sync(self):
        baselines.sync_target(self.model)

    def networks(self):
        return {"q": self.model.online, "target_q": self.model.target}


class MfqLearner(Learner):
    algorithm = "mfq"

    def __init__(self, model: baselines.MfqModel, opt, target_sync=500, gamma=0.95,
                 exploration="boltzmann"):
        super().__init__(opt, target_sync, gamma)
        if exploration not in ("boltzmann", "epsilon"):
            raise ConfigurationError(f"unknown exploration {exploration!r}")
        self.model = model
        self.state_dim = model.state_dim
        self.exploration = exploration

    def q_values(self, states, co):
        return self.model.q_all(states, co.mean_action(self.model.n_actions))

    def act(self, states, co, epsilon, rng):
        q = self.q_values(states, co)
        if self.exploration == "epsilon":
            return fql.epsilon_greedy(q, epsilon, rng)
        return baselines.boltzmann(q, self.model.temperature, rng)

    def _step(self, batch):
        return baselines.mfq_train_step(self.model, batch, self.gamma, self.opt)

    def sync(self):
        baselines.sync_target(self.model)

    def manifest(self):
        return {**super().manifest(), "exploration": self.exploration}

    def networks(self):
        return {"q": self.model.online, "target_q": self.model.target}


def env_meta(cfg) -> dict:
    """Environment description saved with a checkpoint, used to check cross-play compatibility."""
    if cfg.environment == "squeeze":
        return {"environment": "squeeze", "squeeze": cfg.squeeze.model_dump(mode="json")}
    return {"environment": "battle", "battle": cfg.battle.model_dump(mode="json"),
            "neighbor_radius": cfg.neighbor_radius}


def make_learner(cfg, state_dim: int, n_actions: int, battle=None, group_id: int = 1) -> Learner:
    """Build the learner named by ``cfg.algorithm``; all draw initial weights from ``cfg.seed``."""
    learner = _make_learner(cfg, state_dim, n_actions, battle, group_id)
    learner.meta = env_meta(cfg)
    return learner


def _make_learner(cfg, state_dim, n_actions, battle, group_id):
    factory = make_net_factory(cfg, state_dim, battle)
    opt = OptimizerState(cfg.optimizer.algorithm, cfg.optimizer.lr,
                         max_grad_norm=cfg.optimizer.max_grad_norm)
    common = dict(target_sync=cfg.target_sync, gamma=cfg.gamma)
    if cfg.algorithm == "fql":
        model = fql.FactorizedQModel.build(state_dim, n_actions, cfg.fql.embed_dim, cfg.fql.lam,
                                           seed=cfg.seed, net_factory=factory)
        return FqlLearner(fql.GroupModel.create(model, group_id), opt, **common)
    if cfg.algorithm in ("iql", "diql"):
        model = baselines.IqlModel.build(state_dim, n_actions, hidden=cfg.network.hidden,
                                         seed=cfg.seed, dueling=cfg.algorithm == "diql",
                                         net_factory=factory)
        return IqlLearner(model, opt, **common)
    if cfg.algorithm == "mfq":
        model = baselines.MfqModel.build(state_dim, n_actions, seed=cfg.seed,
                                         temperature=cfg.mfq.temperature, net_factory=factory)
        return MfqLearner(model, opt, exploration=cfg.mfq.exploration, **common)
    raise ConfigurationError(f"unknown algorithm {cfg.algorithm!r}")


def load_learner(directory) -> Learner:
    """Rebuild a learner (greedy use; optimizer state is not stored) from ``save`` output."""
    d = Path(directory)
    try:
        meta = json.loads((d / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"no checkpoint manifest in {d}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {meta.get('version')}")
    nets = {p.stem: checkpoint.load(p)[0] for p in sorted(d.glob("*.bin"))}
    opt = OptimizerState()
    algo = meta["algorithm"]
    n_actions = meta["n_actions"]
    if algo == "fql":
        online = fql.FactorizedQModel(nets["q"], nets["v"], nets["u"], n_actions,
                                      meta["embed_dim"], meta["lam"])
        target = fql.FactorizedQModel(nets["target_q"], nets["target_v"], nets["target_u"],
                                      n_actions, meta["embed_dim"], meta["lam"])
        return _with_meta(FqlLearner(fql.GroupModel(online, target, meta["group_id"]), opt), meta)
    if algo in ("iql", "diql"):
        model = baselines.IqlModel(nets["q"], n_actions, dueling=algo == "diql")
        model.target.params[...] = nets["target_q"].params
        return _with_meta(IqlLearner(model, opt), meta)
    if algo == "mfq":
        model = baselines.MfqModel(nets["q"], n_actions, meta["temperature"])
        model.target.params[...] = nets["target_q"].params
        return _with_meta(MfqLearner(model, opt, exploration=meta["exploration"]), meta)
    raise ConfigurationError(f"unknown algorithm {algo!r} in checkpoint")


def _with_meta(learner: Learner, meta: dict) -> Learner:
    learner.meta = dict(meta.get("meta", {}))
    return learner
