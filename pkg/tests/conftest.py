import numpy as np
import pytest

from fqlearn.fql import FactorizedQModel
from fqlearn.nn import Network, dense


def table_net(n_in, table, state_weights=None):
    """A single dense layer that ignores its input and emits ``table`` as bias."""
    table = np.asarray(table, dtype=np.float64).reshape(-1)
    net = Network([dense(n_in, table.size)])
    w = np.zeros((n_in, table.size)) if state_weights is None else np.asarray(state_weights, float)
    net.params[...] = np.concatenate([w.ravel(), table])
    return net


def stub_model(q, v, u, lam=1.0, state_dim=1):
    """Tabular stub: q (A,), v (A, d) and u (A, d) independent of the state.

    u_net reads [state, onehot(action)], so its weights on the one-hot block
    are exactly the per-action table and its bias is zero.
    """
    q = np.asarray(q, float)
    v = np.asarray(v, float).reshape(q.size, -1)
    u = np.asarray(u, float).reshape(q.size, -1)
    a, d = v.shape
    u_net = Network([dense(state_dim + a, d)])
    w = np.vstack([np.zeros((state_dim, d)), u])
    u_net.params[...] = np.concatenate([w.ravel(), np.zeros(d)])
    return FactorizedQModel(table_net(state_dim, q), table_net(state_dim, v), u_net, a, d, lam)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
