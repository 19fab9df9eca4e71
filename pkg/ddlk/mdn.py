"""
Mixture density network for one univariate conditional.

Three rectified hidden layers with a skip connection from the input to the
last hidden layer (added before its nonlinearity), and three heads for the
mixture weights (softmax), means and stddevs (exp, then floored). All
parameters live in one flat float64 vector so optimizers and the model file
see a single block per network. Gradients are hand-derived reverse passes.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import softmax

from .exceptions import InvalidInput
from .gmm_core import SIGMA_FLOOR, GaussianMixture1D, log_prob_partials, mixture_sample

DEFAULT_COMPONENTS = 5
DEFAULT_HIDDEN_UNITS = 50

# exp() of the raw stddev head is capped here; beyond it the head gets no gradient
RAW_STDDEV_CAP = 30.0

SKIP_PLACEMENT = 'last-hidden-pre-activation'

# ParameterGradient: flat vector aligned with ConditionalDensityNetwork.params
ParameterGradient = np.ndarray


@lru_cache(maxsize=None)
def parameter_layout(input_dim, n_components, hidden_units):
    """Ordered (name, shape, offset) triples for the flat parameter vector"""
    shapes = [
        ('hidden1.weight', (hidden_units, input_dim)),
        ('hidden1.bias', (hidden_units,)),
        ('hidden2.weight', (hidden_units, hidden_units)),
        ('hidden2.bias', (hidden_units,)),
        ('hidden3.weight', (hidden_units, hidden_units)),
        ('hidden3.bias', (hidden_units,)),
        ('skip.weight', (hidden_units, input_dim)),
        ('logits.weight', (n_components, hidden_units)),
        ('logits.bias', (n_components,)),
        ('means.weight', (n_components, hidden_units)),
        ('means.bias', (n_components,)),
        ('stddevs.weight', (n_components, hidden_units)),
        ('stddevs.bias', (n_components,)),
    ]
    layout = []
    offset = 0
    for name, shape in shapes:
        layout.append((name, shape, offset))
        offset += int(np.prod(shape))
    return tuple(layout), offset


@dataclass
class ConditionalDensityNetwork:
    input_dim: int
    n_components: int
    hidden_units: int
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.n_parameters,):
            raise InvalidInput(
                f'expected {self.n_parameters} parameters for input_dim={self.input_dim}, '
                f'K={self.n_components}, got {self.params.size}'
            )

    @property
    def n_parameters(self):
        return parameter_layout(self.input_dim, self.n_components, self.hidden_units)[1]

    def unpack(self, vector=None):
        """Named reshaped views into the flat vector (the parameters by default)"""
        vector = self.params if vector is None else vector
        layout, _ = parameter_layout(self.input_dim, self.n_components, self.hidden_units)
        return {name: vector[offset:offset + int(np.prod(shape))].reshape(shape) for name, shape, offset in layout}

    def copy(self):
        return ConditionalDensityNetwork(self.input_dim, self.n_components, self.hidden_units, self.params.copy())


class ForwardCache(NamedTuple):
    cond: np.ndarray
    pre1: np.ndarray
    hidden1: np.ndarray
    pre2: np.ndarray
    hidden2: np.ndarray
    pre3: np.ndarray
    hidden3: np.ndarray
    weights: np.ndarray
    exp_stddevs: np.ndarray
    stddev_active: np.ndarray


class LogProbGradients(NamedTuple):
    logp: np.ndarray
    grad: np.ndarray
    d_cond: np.ndarray
    d_z: np.ndarray


def mdn_init(input_dim, n_components, data_support, rng, hidden_units=DEFAULT_HIDDEN_UNITS):
    """
    Fan-in uniform weights and zero biases, except the head biases: at zero
    input the K means sit evenly spaced on the support and each stddev is
    (hi - lo) / (2K).
    """
    if n_components < 1:
        raise InvalidInput('a density network needs at least one mixture component')
    if input_dim < 0:
        raise InvalidInput('input_dim must be nonnegative')
    lo, hi = float(data_support[0]), float(data_support[1])
    if not lo < hi:
        raise InvalidInput(f'support must satisfy lo < hi, got ({lo}, {hi})')

    layout, size = parameter_layout(input_dim, n_components, hidden_units)
    params = np.zeros(size)
    for name, shape, offset in layout:
        if not name.endswith('.weight'):
            continue
        fan_in = shape[1]
        count = int(np.prod(shape))
        if fan_in == 0 or count == 0:
            continue
        bound = 1.0 / np.sqrt(fan_in)
        params[offset:offset + count] = rng.uniform(-bound, bound, size=count)

    net = ConditionalDensityNetwork(input_dim, n_components, hidden_units, params)
    views = net.unpack()
    if n_components == 1:
        views['means.bias'][:] = 0.5 * (lo + hi)
    else:
        views['means.bias'][:] = lo + np.arange(n_components) * (hi - lo) / (n_components - 1)
    views['stddevs.bias'][:] = np.log(max((hi - lo) / (2.0 * n_components), SIGMA_FLOOR))
    return net


def _as_batch(net, cond):
    cond = np.asarray(cond, dtype=np.float64)
    single = cond.ndim == 1
    if single:
        cond = cond[None, :]
    if cond.ndim != 2 or cond.shape[1] != net.input_dim:
        raise InvalidInput(f'conditioning input must have {net.input_dim} columns, got shape {cond.shape}')
    if not np.all(np.isfinite(cond)):
        raise InvalidInput('invalid input')
    return cond, single


def _relu(a):
    return np.maximum(a, 0.0)


def mdn_forward_cached(net, cond):
    """Forward pass over a (B, input_dim) batch; returns the mixtures and the cache for mdn_backward"""
    cond, _ = _as_batch(net, cond)
    p = net.unpack()
    pre1 = cond @ p['hidden1.weight'].T + p['hidden1.bias']
    hidden1 = _relu(pre1)
    pre2 = hidden1 @ p['hidden2.weight'].T + p['hidden2.bias']
    hidden2 = _relu(pre2)
    pre3 = hidden2 @ p['hidden3.weight'].T + p['hidden3.bias'] + cond @ p['skip.weight'].T
    hidden3 = _relu(pre3)

    weights = softmax(hidden3 @ p['logits.weight'].T + p['logits.bias'], axis=-1)
    means = hidden3 @ p['means.weight'].T + p['means.bias']
    raw_stddevs = hidden3 @ p['stddevs.weight'].T + p['stddevs.bias']
    capped = np.minimum(raw_stddevs, RAW_STDDEV_CAP)
    stddevs = np.maximum(np.exp(capped), SIGMA_FLOOR)
    active = (raw_stddevs < RAW_STDDEV_CAP) & (np.exp(capped) > SIGMA_FLOOR)

    gmm = GaussianMixture1D(weights=weights, means=means, stddevs=stddevs)
    cache = ForwardCache(cond, pre1, hidden1, pre2, hidden2, pre3, hidden3, weights, np.exp(capped), active)
    return gmm, cache


def mdn_forward(net, cond):
    """Mixture parameters for one conditioning vector, or one mixture per row of a batch"""
    _, single = _as_batch(net, cond)
    gmm, _ = mdn_forward_cached(net, cond)
    if single:
        return GaussianMixture1D(gmm.weights[0], gmm.means[0], gmm.stddevs[0])
    return gmm


def mdn_backward(net, cache, g_weights, g_means, g_stddevs):
    """
    Chain per-row upstream gradients on (pi, mu, sigma) through the heads
    and trunk. Returns the parameter gradient summed over rows and the
    per-row gradient with respect to the conditioning input.
    """
    p = net.unpack()
    grad = np.zeros(net.n_parameters)
    g = net.unpack(grad)

    weights = cache.weights
    g_logits = weights * (g_weights - np.sum(weights * g_weights, axis=-1, keepdims=True))
    g_raw = g_stddevs * cache.exp_stddevs * cache.stddev_active

    h3 = cache.hidden3
    g['logits.weight'][:] = g_logits.T @ h3
    g['logits.bias'][:] = g_logits.sum(axis=0)
    g['means.weight'][:] = g_means.T @ h3
    g['means.bias'][:] = g_means.sum(axis=0)
    g['stddevs.weight'][:] = g_raw.T @ h3
    g['stddevs.bias'][:] = g_raw.sum(axis=0)

    g_h3 = g_logits @ p['logits.weight'] + g_means @ p['means.weight'] + g_raw @ p['stddevs.weight']
    g_pre3 = g_h3 * (cache.pre3 > 0)
    g['hidden3.weight'][:] = g_pre3.T @ cache.hidden2
    g['hidden3.bias'][:] = g_pre3.sum(axis=0)
    g['skip.weight'][:] = g_pre3.T @ cache.cond

    g_pre2 = (g_pre3 @ p['hidden3.weight']) * (cache.pre2 > 0)
    g['hidden2.weight'][:] = g_pre2.T @ cache.hidden1
    g['hidden2.bias'][:] = g_pre2.sum(axis=0)

    g_pre1 = (g_pre2 @ p['hidden2.weight']) * (cache.pre1 > 0)
    g['hidden1.weight'][:] = g_pre1.T @ cache.cond
    g['hidden1.bias'][:] = g_pre1.sum(axis=0)

    d_cond = g_pre1 @ p['hidden1.weight'] + g_pre3 @ p['skip.weight']
    return grad, d_cond


def mdn_logprob_gradients(net, cond, z, row_weights=None):
    """
    log q(z | cond) per row, with the row-weighted parameter gradient
    sum_r w_r dlogp_r/dparams and per-row w_r dlogp_r/dcond, w_r dlogp_r/dz.
    """
    cond, single = _as_batch(net, cond)
    z = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if z.shape != (cond.shape[0],):
        raise InvalidInput(f'expected {cond.shape[0]} targets, got shape {z.shape}')
    gmm, cache = mdn_forward_cached(net, cond)
    partials = log_prob_partials(gmm, z)
    scale = np.ones(cond.shape[0]) if row_weights is None else np.broadcast_to(row_weights, z.shape)
    grad, d_cond = mdn_backward(
        net, cache,
        partials.d_weights * scale[:, None],
        partials.d_means * scale[:, None],
        partials.d_stddevs * scale[:, None],
    )
    d_z = partials.d_z * scale
    if single:
        return LogProbGradients(partials.log_prob[0], grad, d_cond[0], d_z[0])
    return LogProbGradients(partials.log_prob, grad, d_cond, d_z)


def mdn_logprob_backward(net, cond, z):
    """(logp, dlogp/dparams, dlogp/dcond) for one conditioning vector or a batch (gradient summed)"""
    result = mdn_logprob_gradients(net, cond, z)
    return result.logp, result.grad, result.d_cond


def mdn_sample_backward(net, cond, rng):
    """
    Sample z from the forward mixture and chain the implicit path gradients
    through the heads: (z, dz/dparams, dz/dcond). For a batch the parameter
    gradient is summed over rows.
    """
    _, single = _as_batch(net, cond)
    gmm, cache = mdn_forward_cached(net, cond)
    z, path = mixture_sample(gmm, rng)
    grad, d_cond = mdn_backward(net, cache, path.d_weights, path.d_means, path.d_stddevs)
    if single:
        return z[0], grad, d_cond[0]
    return z, grad, d_cond
