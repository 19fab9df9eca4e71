"""
Chain-rule models built from one density network per coordinate.

The covariate model q_joint(x) has base_dim = 0: conditional j sees
x_1..x_{j-1}. The knockoff model q_knockoff(xt | x) has base_dim = d:
conditional j sees (x_1..x_d, xt_1..xt_{j-1}). Coordinates are taken in
the natural column order of the training data.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed

from .exceptions import InvalidInput, NumericalAbort
from .gmm_core import mixture_cdf, mixture_quantile, mixture_sample
from .mdn import (
    mdn_backward, mdn_forward_cached, mdn_init, mdn_logprob_gradients,
)
from .optim import AdamState, EarlyStopping, adam_step
from .utils import spawn_streams, thread_budget

logger = logging.getLogger(__name__)

ORDERING = 'natural'


@dataclass
class AutoregressiveModel:
    d: int
    base_dim: int
    conditionals: list
    support: np.ndarray
    columns: tuple = ()
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.float64).reshape(self.d, 2)
        if not self.columns:
            self.columns = tuple(f'x{j + 1}' for j in range(self.d))
        self.columns = tuple(self.columns)
        if len(self.conditionals) != self.d:
            raise InvalidInput(f'expected {self.d} conditionals, got {len(self.conditionals)}')
        for j, net in enumerate(self.conditionals):
            if net.input_dim != self.base_dim + j:
                raise InvalidInput(
                    f'conditional {j} takes {net.input_dim} inputs, expected {self.base_dim + j}'
                )

    @property
    def kind(self):
        return 'joint' if self.base_dim == 0 else 'knockoff'

    @property
    def n_components(self):
        return self.conditionals[0].n_components

    @property
    def hidden_units(self):
        return self.conditionals[0].hidden_units

    def copy(self):
        return AutoregressiveModel(
            self.d, self.base_dim, [net.copy() for net in self.conditionals],
            self.support.copy(), self.columns, list(self.history),
        )


class ChainGradients(NamedTuple):
    logp: np.ndarray
    grads: list
    d_base: np.ndarray
    d_v: np.ndarray


@dataclass
class SamplingTrace:
    """Per-coordinate forward caches and implicit path gradients of one knockoff draw"""
    caches: list
    paths: list


def _as_rows(model, base, v):
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    if v.ndim != 2 or v.shape[1] != model.d:
        raise InvalidInput(f'expected {model.d} modeled coordinates, got shape {v.shape}')
    if base is None:
        base = np.zeros((v.shape[0], 0))
    base = np.asarray(base, dtype=np.float64)
    if base.ndim == 1:
        base = base[None, :]
    if base.shape != (v.shape[0], model.base_dim):
        raise InvalidInput(f'expected base of shape {(v.shape[0], model.base_dim)}, got {base.shape}')
    return base, v, single


def _conditioning(base, v, j):
    return np.concatenate([base, v[:, :j]], axis=1)


def model_log_prob(model, base, v):
    """Sum of the d conditional log densities; one value per row (scalar for a single vector)"""
    base, v, single = _as_rows(model, base, v)
    total = np.zeros(v.shape[0])
    for j, net in enumerate(model.conditionals):
        total += mdn_logprob_gradients(net, _conditioning(base, v, j), v[:, j]).logp
    return total[0] if single else total


def model_log_prob_backward(model, base, v, row_weights=None):
    """
    Per-row log density with the row-weighted gradients for every
    conditional's parameters, the base vector and the modeled vector. A
    coordinate's gradient includes its role as input to later conditionals.
    """
    base, v, _ = _as_rows(model, base, v)
    n = v.shape[0]
    total = np.zeros(n)
    grads = []
    d_base = np.zeros_like(base)
    d_v = np.zeros_like(v)
    for j, net in enumerate(model.conditionals):
        result = mdn_logprob_gradients(net, _conditioning(base, v, j), v[:, j], row_weights)
        total += result.logp
        grads.append(result.grad)
        d_v[:, j] += result.d_z
        d_base += result.d_cond[:, :model.base_dim]
        d_v[:, :j] += result.d_cond[:, model.base_dim:]
    return ChainGradients(total, grads, d_base, d_v)


def pair_log_prob(joint_model, knockoff_model, x, xt):
    """log q_joint(x) + log q_knockoff(xt | x)"""
    return model_log_prob(joint_model, None, x) + model_log_prob(knockoff_model, x, xt)


def sample_knockoffs(kmodel, x, rng):
    """
    Draw xt_j from conditional j given (x, xt_1..xt_{j-1}) in order. The
    returned trace keeps every coordinate's path gradients so that
    knockoff_pathwise_backward can run through the whole chain.
    """
    if kmodel.base_dim != kmodel.d:
        raise InvalidInput('sample_knockoffs needs a knockoff model (base_dim = d)')
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.ndim != 2 or rows.shape[1] != kmodel.d:
        raise InvalidInput(f'expected {kmodel.d} columns, got shape {x.shape}')
    xt = np.zeros_like(rows)
    caches, paths = [], []
    for j, net in enumerate(kmodel.conditionals):
        gmm, cache = mdn_forward_cached(net, _conditioning(rows, xt, j))
        z, path = mixture_sample(gmm, rng)
        xt[:, j] = z
        caches.append(cache)
        paths.append(path)
    trace = SamplingTrace(caches, paths)
    return (xt[0] if single else xt), trace


def knockoff_pathwise_backward(kmodel, trace, g_xt):
    """
    Reverse sweep through a sampling chain. g_xt holds per-row upstream
    gradients on the sampled knockoffs; returns the parameter gradient of
    every conditional and the gradient with respect to x.
    """
    g = np.array(np.atleast_2d(g_xt), dtype=np.float64)
    d = kmodel.d
    d_x = np.zeros_like(g)
    grads = [None] * d
    for j in reversed(range(d)):
        net = kmodel.conditionals[j]
        path = trace.paths[j]
        g_j = g[:, j][:, None]
        grads[j], d_cond = mdn_backward(
            net, trace.caches[j], path.d_weights * g_j, path.d_means * g_j, path.d_stddevs * g_j,
        )
        d_x += d_cond[:, :d]
        g[:, :j] += d_cond[:, d:]
    return grads, d_x


def knockoff_levels(kmodel, x, xt):
    """CDF level u_j of each knockoff coordinate under its own conditional"""
    base, v, _ = _as_rows(kmodel, x, xt)
    levels = np.zeros_like(v)
    for j, net in enumerate(kmodel.conditionals):
        gmm, _ = mdn_forward_cached(net, _conditioning(base, v, j))
        levels[:, j] = mixture_cdf(gmm, v[:, j])
    return levels


def knockoffs_from_levels(kmodel, x, levels):
    """Deterministic chain sampling by inverting each conditional CDF at the given levels"""
    base, u, single = _as_rows(kmodel, x, levels)
    xt = np.zeros_like(u)
    for j, net in enumerate(kmodel.conditionals):
        gmm, _ = mdn_forward_cached(net, _conditioning(base, xt, j))
        xt[:, j] = mixture_quantile(gmm, u[:, j])
    return xt[0] if single else xt


def data_support(data):
    """Per-column (min, max); constant columns are widened to unit length"""
    data = np.asarray(data, dtype=np.float64)
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    flat = hi - lo <= 0
    lo = np.where(flat, lo - 0.5, lo)
    hi = np.where(flat, hi + 0.5, hi)
    return np.stack([lo, hi], axis=1)


def init_knockoff_model(d, support, config, rng, columns=()):
    streams = spawn_streams(rng, d)
    conditionals = [
        mdn_init(d + j, config.n_components, support[j], streams[j], hidden_units=config.hidden_units)
        for j in range(d)
    ]
    return AutoregressiveModel(d, d, conditionals, support, columns)


def _check_matrix(data, name):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidInput(f'{name} must be a 2-d matrix, got shape {data.shape}')
    if not np.all(np.isfinite(data)):
        raise InvalidInput(f'{name} contains non-finite values')
    return data


def _fit_conditional(j, train, val, support, config, rng):
    """Maximum likelihood for conditional j of the joint model; returns (best net, history)"""
    net = mdn_init(j, config.n_components, support, rng, hidden_units=config.hidden_units)
    cond_train, target_train = train[:, :j], train[:, j]
    cond_val, target_val = val[:, :j], val[:, j]
    state = AdamState.zeros(net.n_parameters)
    stopper = EarlyStopping(patience=config.patience, min_delta=config.min_delta)
    best = net.copy()
    history = []
    n = train.shape[0]
    for epoch in range(config.max_epochs_joint):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            result = mdn_logprob_gradients(net, cond_train[rows], target_train[rows], 1.0 / len(rows))
            loss = -float(np.mean(result.logp))
            if not np.isfinite(loss) or not np.all(np.isfinite(result.grad)):
                raise NumericalAbort('non-finite joint-model loss', feature=j, epoch=epoch)
            net.params, state = adam_step(net.params, -result.grad, state, config.lr_joint)
            losses.append(loss)
        val_loss = -float(np.mean(mdn_logprob_gradients(net, cond_val, target_val).logp))
        if not np.isfinite(val_loss):
            raise NumericalAbort('non-finite joint-model validation loss', feature=j, epoch=epoch)
        if stopper(val_loss):
            best = net.copy()
        history.append({
            'feature': j,
            'epoch': epoch,
            'train_loss': float(np.mean(losses)),
            'val_loss': val_loss,
            'best_val_loss': stopper.best_loss,
        })
        logger.debug('joint conditional %d epoch %d: train %.5f val %.5f', j, epoch, history[-1]['train_loss'], val_loss)
        if stopper.early_stop:
            logger.info('joint conditional %d stopped early after epoch %d', j, epoch)
            break
    return best, history


def fit_joint(data_train, data_val, config, rng, columns=(), n_jobs=None):
    """
    Stage 1: fit q_joint by maximum likelihood, one conditional at a time.
    Conditionals share no parameters and are fit in parallel; each has its
    own random stream so the result does not depend on the worker count.
    The caller supplies the validation split.
    """
    train = _check_matrix(data_train, 'training data')
    if data_val is None:
        raise InvalidInput('fit_joint needs an explicit validation set')
    val = _check_matrix(data_val, 'validation data')
    n, d = train.shape
    if n < 2 or d < 1:
        raise InvalidInput(f'need at least 2 rows and 1 column, got {train.shape}')
    if val.shape[1] != d or val.shape[0] < 1:
        raise InvalidInput(f'validation data has shape {val.shape}, expected (*, {d})')

    support = data_support(train)
    streams = spawn_streams(rng, d)
    n_jobs = thread_budget() if n_jobs is None else n_jobs
    logger.info('fitting joint model: %d rows, %d features, %d workers', n, d, n_jobs)
    fitted = Parallel(n_jobs=n_jobs)(
        delayed(_fit_conditional)(j, train, val, support[j], config, streams[j]) for j in range(d)
    )
    conditionals = [net for net, _ in fitted]
    history = [record for _, records in fitted for record in records]
    return AutoregressiveModel(d, 0, conditionals, support, columns, history)
