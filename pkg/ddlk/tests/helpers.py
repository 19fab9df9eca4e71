"""Builders shared by the ddlk tests"""
import numpy as np

from ddlk.autoregressive import AutoregressiveModel
from ddlk.mdn import ConditionalDensityNetwork, mdn_init
from ddlk.trainer import TrainConfig


def constant_network(input_dim, means, stddevs, weights=None, hidden_units=4):
    """A density network whose heads ignore the input: one fixed mixture"""
    means = np.atleast_1d(np.asarray(means, dtype=np.float64))
    K = means.size
    stddevs = np.broadcast_to(np.asarray(stddevs, dtype=np.float64), (K,))
    weights = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=np.float64)
    net = mdn_init(input_dim, K, (-1.0, 1.0), np.random.default_rng(0), hidden_units=hidden_units)
    views = net.unpack()
    for name in ('logits.weight', 'means.weight', 'stddevs.weight'):
        views[name][:] = 0.0
    views['logits.bias'][:] = np.log(weights)
    views['means.bias'][:] = means
    views['stddevs.bias'][:] = np.log(stddevs)
    return net


def constant_model(d, base_dim, means, stddevs):
    """Autoregressive model of independent fixed mixtures, one per coordinate"""
    conditionals = [constant_network(base_dim + j, means[j], stddevs[j]) for j in range(d)]
    return AutoregressiveModel(d, base_dim, conditionals, [(-3.0, 3.0)] * d)


def random_network(input_dim, K, rng, hidden_units=6, scale=0.5):
    """Small network with every parameter random, so all ReLUs and heads carry gradient"""
    net = mdn_init(input_dim, K, (-2.0, 2.0), rng, hidden_units=hidden_units)
    params = net.params + scale * rng.standard_normal(net.n_parameters)
    return ConditionalDensityNetwork(input_dim, K, hidden_units, params)


def random_model(d, base_dim, rng, K=2, hidden_units=6):
    conditionals = [random_network(base_dim + j, K, rng, hidden_units) for j in range(d)]
    return AutoregressiveModel(d, base_dim, conditionals, [(-2.0, 2.0)] * d)


def small_config(**overrides):
    values = dict(
        n_components=3, hidden_units=16, batch_size=64, patience=5,
        max_epochs_joint=30, max_epochs_knockoff=30, lr_joint=5e-3, lr_phi=2e-3,
    )
    values.update(overrides)
    return TrainConfig(**values)


def ar_gaussian(n, d, rho, rng):
    index = np.arange(d)
    sigma = rho ** np.abs(index[:, None] - index[None, :])
    return rng.standard_normal((n, d)) @ np.linalg.cholesky(sigma).T
