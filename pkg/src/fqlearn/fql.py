"""Factorized Q-learning.

Each agent's joint-action value is its own term plus a weighted inner product
between an action-conditioned embedding of its state and the average
embedding of its co-agents' (state, last action) pairs:

    Q(s_i, a_i) + lam * <V(s_i)[a_i], mean_j U(s_j, a_j)>

One model is shared by every agent in a group. Bootstrap targets fix the
co-agents at their last actions and scan only the agent's own actions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coset import CoSet, Transition, TransitionBatch, collate, one_hot
from .errors import ConfigurationError, DegenerateInputError, TrainingError
from .nn import Module, OptimizerState, copy_params, mlp

_live_models = 0


def live_model_count() -> int:
    """Number of FactorizedQModel/IQL/MF-Q models constructed so far (for accounting)."""
    return _live_models


def _count_model():
    global _live_models
    _live_models += 1


def check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise ConfigurationError(f"discount must lie in [0, 1), got {gamma}")


class FactorizedQModel:
    def __init__(self, q_net: Module, v_net: Module, u_net: Module, n_actions: int,
                 embed_dim: int, lam: float = 1.0):
        if embed_dim < 1:
            raise ConfigurationError("embedding dimension must be positive")
        if lam < 0:
            raise ConfigurationError("interaction weight must be non-negative")
        if q_net.out_shape != (n_actions,):
            raise ConfigurationError(f"q_net emits {q_net.out_shape}, expected ({n_actions},)")
        if v_net.out_shape != (embed_dim * n_actions,):
            raise ConfigurationError("v_net must emit one embedding per action")
        if u_net.out_shape != (embed_dim,):
            raise ConfigurationError("u_net must emit one embedding")
        if q_net.in_shape != v_net.in_shape:
            raise ConfigurationError("q_net and v_net must read the same state encoding")
        self.q_net, self.v_net, self.u_net = q_net, v_net, u_net
        self.n_actions = n_actions
        self.embed_dim = embed_dim
        self.lam = float(lam)
        self.state_dim = int(np.prod(q_net.in_shape))
        if u_net.in_shape != (self.state_dim + n_actions,):
            raise ConfigurationError("u_net reads a state encoding plus a one-hot action")
        _count_model()

    @classmethod
    def build(cls, state_dim: int, n_actions: int, embed_dim: int = 32, lam: float = 1.0,
              hidden=(64, 64), seed=0, net_factory=None) -> "FactorizedQModel":
        """Three independently initialised networks; q_net is drawn first.

        ``net_factory(n_out, n_extra, rng)`` may replace the default perceptron
        (``n_extra`` extra input features appended to the state encoding).
        """
        rng = np.random.default_rng(seed)
        if net_factory is None:
            def net_factory(n_out, n_extra, rng):
                return mlp(state_dim + n_extra, hidden, n_out, seed=rng)
        q = net_factory(n_actions, 0, rng)
        v = net_factory(embed_dim * n_actions, 0, rng)
        u = net_factory(embed_dim, n_actions, rng)
        return cls(q, v, u, n_actions, embed_dim, lam)

    @staticmethod
    def pair_weight_to_lambda(pair_weight: float, n_agents: int) -> float:
        return pair_weight * (n_agents - 1)

    @property
    def nets(self):
        return [self.q_net, self.v_net, self.u_net]

    def clone(self) -> "FactorizedQModel":
        return FactorizedQModel(self.q_net.clone(), self.v_net.clone(), self.u_net.clone(),
                                self.n_actions, self.embed_dim, self.lam)

    def manifest(self) -> dict:
        return {"algorithm": "fql", "embed_dim": self.embed_dim, "lam": self.lam,
                "n_actions": self.n_actions}

    # batched evaluation -------------------------------------------------

    def u_inputs(self, states, actions):
        return np.concatenate([np.asarray(states, dtype=np.float64).reshape(len(actions), -1),
                               one_hot(actions, self.n_actions)], axis=1)

    def co_embedding(self, co: CoSet) -> np.ndarray:
        """Mean U embedding per owner; owners without co-agents get zeros."""
        if co.actions.size == 0:
            return np.zeros((co.weights.shape[0], self.embed_dim))
        return co.weights @ self.u_net.forward(self.u_inputs(co.states, co.actions))

    def q_all(self, states, ubar) -> np.ndarray:
        """(B, |A|) Q-values: one q_net and one v_net pass for the whole batch."""
        states = np.asarray(states, dtype=np.float64)
        q = self.q_net.forward(states)
        v = self.v_net.forward(states).reshape(len(states), self.n_actions, self.embed_dim)
        return q + self.lam * np.einsum("bad,bd->ba", v, ubar)

    def q_all_coset(self, states, co: CoSet) -> np.ndarray:
        return self.q_all(states, self.co_embedding(co))


@dataclass
class GroupModel:
    online: FactorizedQModel
    target: FactorizedQModel
    group_id: int = 1

    @classmethod
    def create(cls, online, group_id: int = 1) -> "GroupModel":
        return cls(online, online.clone(), group_id)

    def __post_init__(self):
        for a, b in zip(self.online.nets, self.target.nets):
            if not a.same_architecture(b):
                raise ConfigurationError("online and target architectures differ")


# single-agent operations ------------------------------------------------

def mean_embedding(model: FactorizedQModel, co_states, co_actions) -> np.ndarray:
    if len(co_actions) == 0:
        raise DegenerateInputError("mean embedding over an empty co-agent list")
    if len(co_states) != len(co_actions):
        raise ConfigurationError("co-agent states and actions differ in length")
    co = CoSet.build([co_states], [co_actions], model.state_dim)
    return model.co_embedding(co)[0]


def _check_embed(model, mean_embed):
    mean_embed = np.asarray(mean_embed, dtype=np.float64).reshape(-1)
    if mean_embed.size != model.embed_dim:
        raise ConfigurationError(f"mean embedding has length {mean_embed.size}, expected {model.embed_dim}")
    return mean_embed


def q_values_all_actions(model: FactorizedQModel, own_state, mean_embed) -> np.ndarray:
    mean_embed = _check_embed(model, mean_embed)
    state = np.asarray(own_state, dtype=np.float64).reshape(1, -1)
    return model.q_all(state, mean_embed[None, :])[0]


def q_value(model: FactorizedQModel, own_state, own_action: int, mean_embed) -> float:
    if not 0 <= own_action < model.n_actions:
        raise ConfigurationError(f"action {own_action} outside [0, {model.n_actions})")
    return float(q_values_all_actions(model, own_state, mean_embed)[own_action])


def greedy(qvals: np.ndarray) -> np.ndarray:
    """Row-wise argmax, lowest index on ties; refuses non-finite values."""
    if not np.all(np.isfinite(qvals)):
        raise TrainingError("non-finite Q-value")
    return np.argmax(qvals, axis=-1)


def best_response_action(model: FactorizedQModel, own_state, mean_embed) -> int:
    return int(greedy(q_values_all_actions(model, own_state, mean_embed)))


def epsilon_greedy(qvals: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Batched epsilon-greedy over rows of ``qvals``.

    Draws one uniform and one random action per row whatever ``epsilon`` is, so
    the random stream does not depend on the algorithm supplying ``qvals``.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError("epsilon must lie in [0, 1]")
    qvals = np.atleast_2d(qvals)
    n, a = qvals.shape
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(a, size=n)
    return np.where(explore, random_actions, greedy(qvals))


def select_action(group: GroupModel, own_state, mean_embed, epsilon: float,
                  rng: np.random.Generator) -> int:
    q = q_values_all_actions(group.online, own_state, mean_embed)
    return int(epsilon_greedy(q[None, :], epsilon, rng)[0])


# targets and training ---------------------------------------------------

def batch_targets(group: GroupModel, batch: TransitionBatch, gamma: float) -> np.ndarray:
    """Double-DQN targets with co-agents held at their time-t actions."""
    check_gamma(gamma)
    y = batch.rewards.copy()
    if batch.live.size:
        a_star = greedy(group.online.q_all_coset(batch.next_states, batch.next_co))
        q_tilde = group.target.q_all_coset(batch.next_states, batch.next_co)
        y[batch.live] = batch.rewards[batch.live] + gamma * q_tilde[np.arange(a_star.size), a_star]
    return y


def target_value(group: GroupModel, tr: Transition, gamma: float) -> float:
    return float(batch_targets(group, collate([tr], group.online.state_dim), gamma)[0])


def _loss_and_grads(model: FactorizedQModel, batch: TransitionBatch, y: np.ndarray):
    b = len(batch)
    rows = np.arange(b)
    q, cq = model.q_net.forward_train(batch.states)
    v, cv = model.v_net.forward_train(batch.states)
    v = v.reshape(b, model.n_actions, model.embed_dim)
    co = batch.co
    if co.actions.size:
        u, cu = model.u_net.forward_train(model.u_inputs(co.states, co.actions))
        ubar = co.weights @ u
    else:
        cu = None
        ubar = np.zeros((b, model.embed_dim))
    v_sel = v[rows, batch.actions]
    pred = q[rows, batch.actions] + model.lam * np.sum(v_sel * ubar, axis=1)
    resid = pred - y
    loss = float(np.mean(resid ** 2))
    if not np.isfinite(loss):
        raise TrainingError("non-finite TD loss")
    g = 2.0 * resid / b
    dq = np.zeros_like(q)
    dq[rows, batch.actions] = g
    gl = (g * model.lam)[:, None]
    dv = np.zeros_like(v)
    dv[rows, batch.actions] = gl * ubar
    gq, _ = model.q_net.backward_cached(cq, dq)
    gv, _ = model.v_net.backward_cached(cv, dv.reshape(b, -1))
    if cu is not None:
        gu, _ = model.u_net.backward_cached(cu, co.weights.T @ (gl * v_sel))
    else:
        gu = np.zeros(model.u_net.n_params)
    return loss, [gq, gv, gu]


def td_loss(group: GroupModel, batch, gamma: float) -> float:
    """Mean squared TD error of the online model (targets held fixed)."""
    batch = collate(batch, group.online.state_dim)
    return _loss_and_grads(group.online, batch, batch_targets(group, batch, gamma))[0]


def td_gradients(group: GroupModel, batch, gamma: float):
    batch = collate(batch, group.online.state_dim)
    return _loss_and_grads(group.online, batch, batch_targets(group, batch, gamma))


def td_train_step(group: GroupModel, batch, gamma: float, opt: OptimizerState) -> float:
    """One optimizer step on the squared TD error; returns the pre-step loss."""
    batch = collate(batch, group.online.state_dim)
    if len(batch) == 0:
        raise ConfigurationError("empty batch")
    y = batch_targets(group, batch, gamma)
    loss, grads = _loss_and_grads(group.online, batch, y)
    opt.step(group.online.nets, grads)
    return loss


def sync_target(group: GroupModel) -> None:
    for src, dst in zip(group.online.nets, group.target.nets):
        copy_params(src, dst)
