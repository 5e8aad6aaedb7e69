"""Comparison learners: independent Q-learning (plain and dueling) and mean-field Q."""
from __future__ import annotations

import numpy as np

from . import fql
from .coset import Transition, TransitionBatch, collate, one_hot
from .errors import ConfigurationError, DegenerateInputError, TrainingError
from .fql import check_gamma, greedy
from .nn import DuelingNetwork, Module, Network, OptimizerState, copy_params, dense, mlp, relu


def _default_factory(state_dim, hidden):
    def factory(n_out, n_extra, rng):
        return mlp(state_dim + n_extra, hidden, n_out, seed=rng)
    return factory


def dueling_from_factory(factory, n_actions: int, width: int, rng) -> DuelingNetwork:
    trunk = factory(width, 0, rng)
    value = Network([relu(width), dense(width, 1)], seed=rng)
    advantage = Network([relu(width), dense(width, n_actions)], seed=rng)
    return DuelingNetwork(trunk, value, advantage)


class IqlModel:
    """Online and target Q-networks over the agent's own state only."""

    def __init__(self, online: Module, n_actions: int, dueling: bool = False):
        if online.out_shape != (n_actions,):
            raise ConfigurationError(f"network emits {online.out_shape}, expected ({n_actions},)")
        self.online = online
        self.target = online.clone()
        self.n_actions = n_actions
        self.dueling = dueling
        self.state_dim = int(np.prod(online.in_shape))
        fql._count_model()

    @classmethod
    def build(cls, state_dim: int, n_actions: int, hidden=(64, 64), seed=0, dueling=False,
              net_factory=None) -> "IqlModel":
        rng = np.random.default_rng(seed)
        factory = net_factory or _default_factory(state_dim, hidden)
        if dueling:
            net = dueling_from_factory(factory, n_actions, hidden[-1], rng)
        else:
            net = factory(n_actions, 0, rng)
        return cls(net, n_actions, dueling)

    @property
    def nets(self):
        return [self.online]

    def manifest(self) -> dict:
        return {"algorithm": "diql" if self.dueling else "iql", "n_actions": self.n_actions}

    def q_all(self, states, net=None) -> np.ndarray:
        return (net or self.online).forward(np.asarray(states, dtype=np.float64))


class MfqModel:
    """Q(s, a, mean co-agent action): the mean one-hot action is appended to the state."""

    def __init__(self, online: Module, n_actions: int, temperature: float = 1.0):
        if temperature <= 0:
            raise ConfigurationError("Boltzmann temperature must be positive")
        if online.out_shape != (n_actions,):
            raise ConfigurationError(f"network emits {online.out_shape}, expected ({n_actions},)")
        self.online = online
        self.target = online.clone()
        self.n_actions = n_actions
        self.temperature = float(temperature)
        self.state_dim = int(np.prod(online.in_shape)) - n_actions
        fql._count_model()

    @classmethod
    def build(cls, state_dim: int, n_actions: int, hidden=(64, 64), seed=0, temperature=1.0,
              net_factory=None) -> "MfqModel":
        rng = np.random.default_rng(seed)
        factory = net_factory or _default_factory(state_dim, hidden)
        return cls(factory(n_actions, n_actions, rng), n_actions, temperature)

    @property
    def nets(self):
        return [self.online]

    def manifest(self) -> dict:
        return {"algorithm": "mfq", "n_actions": self.n_actions, "temperature": self.temperature}

    def inputs(self, states, mean_actions):
        states = np.asarray(states, dtype=np.float64)
        return np.concatenate([states.reshape(len(states), -1), mean_actions], axis=1)

    def q_all(self, states, mean_actions, net=None) -> np.ndarray:
        return (net or self.online).forward(self.inputs(states, mean_actions))


# shared TD machinery ---------------------------------------------------

def _double_dqn(online_q, target_q, rewards, live, gamma):
    y = rewards.copy()
    if live.size:
        a_star = greedy(online_q)
        y[live] = rewards[live] + gamma * target_q[np.arange(a_star.size), a_star]
    return y


def _q_loss_and_grad(net: Module, inputs, actions, y):
    b = actions.size
    rows = np.arange(b)
    q, cache = net.forward_train(inputs)
    pred = q[rows, actions]
    resid = pred - y
    loss = float(np.mean(resid ** 2))
    if not np.isfinite(loss):
        raise TrainingError("non-finite TD loss")
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * resid / b
    grad, _ = net.backward_cached(cache, dq)
    return loss, grad


def iql_batch_targets(model: IqlModel, batch: TransitionBatch, gamma: float) -> np.ndarray:
    check_gamma(gamma)
    if not batch.live.size:
        return batch.rewards.copy()
    return _double_dqn(model.q_all(batch.next_states), model.q_all(batch.next_states, model.target),
                       batch.rewards, batch.live, gamma)


def iql_target(model: IqlModel, tr: Transition, gamma: float) -> float:
    """Double-DQN target that ignores every co-agent field."""
    return float(iql_batch_targets(model, collate([tr], model.state_dim, with_co=False), gamma)[0])


def iql_loss_and_grads(model: IqlModel, batch, gamma: float):
    batch = collate(batch, model.state_dim, with_co=False)
    y = iql_batch_targets(model, batch, gamma)
    loss, grad = _q_loss_and_grad(model.online, batch.states, batch.actions, y)
    return loss, [grad]


def iql_train_step(model: IqlModel, batch, gamma: float, opt: OptimizerState) -> float:
    loss, grads = iql_loss_and_grads(model, batch, gamma)
    opt.step(model.nets, grads)
    return loss


def dueling_q_values(model: IqlModel, own_state) -> np.ndarray:
    if not model.dueling:
        raise ConfigurationError("model has no dueling head")
    return model.online.forward(np.asarray(own_state, dtype=np.float64))


def mean_action(co_actions, n_actions: int) -> np.ndarray:
    """Average one-hot action of the co-agents."""
    co_actions = np.asarray(co_actions, dtype=np.int64)
    if co_actions.size == 0:
        raise DegenerateInputError("mean action over an empty co-agent list")
    if np.any((co_actions < 0) | (co_actions >= n_actions)):
        raise ConfigurationError("action outside the action set")
    return one_hot(co_actions, n_actions).mean(axis=0)


def mfq_batch_targets(model: MfqModel, batch: TransitionBatch, gamma: float) -> np.ndarray:
    check_gamma(gamma)
    if not batch.live.size:
        return batch.rewards.copy()
    inputs = model.inputs(batch.next_states, batch.next_co.mean_action(model.n_actions))
    return _double_dqn(model.online.forward(inputs), model.target.forward(inputs),
                       batch.rewards, batch.live, gamma)


def mfq_target(model: MfqModel, tr: Transition, gamma: float) -> float:
    return float(mfq_batch_targets(model, collate([tr], model.state_dim), gamma)[0])


def mfq_loss_and_grads(model: MfqModel, batch, gamma: float):
    batch = collate(batch, model.state_dim)
    y = mfq_batch_targets(model, batch, gamma)
    inputs = model.inputs(batch.states, batch.co.mean_action(model.n_actions))
    loss, grad = _q_loss_and_grad(model.online, inputs, batch.actions, y)
    return loss, [grad]


def mfq_train_step(model: MfqModel, batch, gamma: float, opt: OptimizerState) -> float:
    loss, grads = mfq_loss_and_grads(model, batch, gamma)
    opt.step(model.nets, grads)
    return loss


def boltzmann_probabilities(qvals, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise ConfigurationError("Boltzmann temperature must be positive")
    z = np.atleast_2d(np.asarray(qvals, dtype=np.float64)) / temperature
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def boltzmann(qvals, temperature: float, rng: np.random.Generator) -> np.ndarray:
    p = boltzmann_probabilities(qvals, temperature)
    u = rng.random(p.shape[0])
    picks = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(picks, p.shape[1] - 1)


def mfq_select_action(model: MfqModel, own_state, mean_act, rng: np.random.Generator,
                      temperature: float | None = None, epsilon: float | None = None) -> int:
    """Boltzmann selection by default; pass ``epsilon`` for epsilon-greedy instead."""
    q = model.q_all(np.asarray(own_state, dtype=np.float64).reshape(1, -1),
                    np.asarray(mean_act, dtype=np.float64).reshape(1, -1))
    if epsilon is not None:
        return int(fql.epsilon_greedy(q, epsilon, rng)[0])
    return int(boltzmann(q, model.temperature if temperature is None else temperature, rng)[0])


def sync_target(model) -> None:
    copy_params(model.online, model.target)
