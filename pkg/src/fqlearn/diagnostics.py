"""Gradient checks over every layer kind and the full factorized TD loss."""
from __future__ import annotations

import numpy as np

from . import fql
from .coset import Transition, collate
from .nn import (DuelingNetwork, Network, conv2d, conv_two_stream, dense, mlp, numeric_gradient,
                 relative_error, relu)
from .nn.gradcheck import gradient_check_detail

TOLERANCE = 1e-4


def _random_transitions(rng, state_dim, n_actions, n, max_co=4):
    out = []
    for _ in range(n):
        k = int(rng.integers(0, max_co + 1))
        k2 = int(rng.integers(0, max_co + 1))
        terminal = bool(rng.random() < 0.3)
        nxt = {} if terminal else dict(
            next_state=rng.standard_normal(state_dim),
            next_co_states=rng.standard_normal((k2, state_dim)),
            next_co_actions=rng.integers(n_actions, size=k2))
        out.append(Transition(rng.standard_normal(state_dim), int(rng.integers(n_actions)),
                              rng.standard_normal((k, state_dim)), rng.integers(n_actions, size=k),
                              float(rng.normal()), terminal=terminal, **nxt))
    return out


def fql_loss_check(seed: int = 0, eps: float = 1e-5, batch: int = 6) -> float:
    """Finite differences of the TD loss w.r.t. q, v and u parameters (targets held fixed)."""
    rng = np.random.default_rng(seed)
    state_dim, n_actions = 3, 4
    model = fql.FactorizedQModel.build(state_dim, n_actions, embed_dim=3,
                                       lam=float(rng.uniform(0.2, 2.0)), hidden=(5,), seed=seed)
    group = fql.GroupModel.create(model)
    # perturb the target so the bootstrap term is not a copy of the online model
    for net in group.target.nets:
        net.params += 0.1 * rng.standard_normal(net.n_params)
    b = collate(_random_transitions(rng, state_dim, n_actions, batch), state_dim)
    y = fql.batch_targets(group, b, gamma=0.9)
    _, grads = fql._loss_and_grads(model, b, y)
    worst = 0.0
    for net, g in zip(model.nets, grads):
        num = numeric_gradient(lambda: fql._loss_and_grads(model, b, y)[0], net.params, eps)
        worst = max(worst, relative_error(g, num))
    return worst


KINDS = ("dense", "relu", "conv2d", "mlp", "two_stream", "dueling")


def _instance(kind: int, rng, seed):
    """A random (name, net, input) triple of the given kind."""
    name = KINDS[kind]
    if name == "dense":
        n_in = int(rng.integers(2, 7))
        return name, Network([dense(n_in, int(rng.integers(1, 5)))], seed=seed), \
            rng.standard_normal((3, n_in))
    if name == "relu":
        n_in = int(rng.integers(2, 7))
        return name, Network([dense(n_in, 6), relu(6)], seed=seed), rng.standard_normal((3, n_in))
    if name == "conv2d":
        h, w, c = (int(v) for v in rng.integers(3, 6, size=3))
        return name, Network([conv2d((h, w, c), 2, 3)], seed=seed), \
            rng.standard_normal((2, h, w, c))
    if name == "mlp":
        return name, mlp(8, [16], 1, seed=seed), rng.standard_normal((4, 8))
    if name == "two_stream":
        two = conv_two_stream(5, 3, 4, 6, conv_channels=(2, 3), hidden=5, seed=seed)
        return name, two, rng.standard_normal((2, two.in_shape[0]))
    duel = DuelingNetwork(mlp(5, [6], 6, seed=seed), Network([relu(6), dense(6, 1)], seed=seed + 1),
                          Network([relu(6), dense(6, 4)], seed=seed + 2))
    return name, duel, rng.standard_normal((3, 5))


def gradient_suite(instances: int = 20, seed: int = 0, eps: float = 1e-5,
                   max_redraws: int = 10) -> tuple[dict[str, float], int]:
    """Worst relative error per component over ``instances`` random draws.

    Returns (worst error per component, number of redrawn instances). Parameters
    are jittered away from their initial values (zero biases plus an all-zero
    input patch put a ReLU exactly on its kink), and a draw whose +-eps probe
    flips any ReLU is redrawn, since central differences across a kink do not
    estimate the derivative. A draw that still straddles a kink after
    ``max_redraws`` attempts is scored as is.
    """
    worst: dict[str, float] = {}
    redrawn = 0
    rng = np.random.default_rng(seed)
    for k in range(instances):
        for kind in range(len(KINDS)):
            for attempt in range(max_redraws + 1):
                name, net, x = _instance(kind, rng, seed + k)
                net.params += 0.05 * rng.standard_normal(net.n_params)
                err, crossings = gradient_check_detail(net, x, eps, seed=seed + k)
                if crossings == 0 or attempt == max_redraws:
                    break
                redrawn += 1
            worst[name] = max(worst.get(name, 0.0), err)
        worst["fql_loss"] = max(worst.get("fql_loss", 0.0), fql_loss_check(seed + k, eps))
    return worst, redrawn
