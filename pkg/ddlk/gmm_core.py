"""
Univariate Gaussian mixture mathematics.

Density, CDF (the standardization function), sampling and the implicit
reparameterization partials of a sample with respect to the mixture
parameters. Every function accepts batched mixtures: arrays carry any
leading batch shape and the component axis last.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp

from .exceptions import InvalidInput

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-3
DENSITY_FLOOR = 1e-30
WEIGHT_TOLERANCE = 1e-9

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianMixture1D:
    """Parameters (pi, mu, sigma) of one or a batch of univariate mixtures"""
    weights: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        stddevs = np.asarray(self.stddevs, dtype=np.float64)
        if weights.ndim == 0 or weights.shape[-1] < 1:
            raise InvalidInput('a mixture needs at least one component')
        if not (weights.shape == means.shape == stddevs.shape):
            raise InvalidInput(
                f'mixture parameter shapes differ: {weights.shape}, {means.shape}, {stddevs.shape}'
            )
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means)) and np.all(np.isfinite(stddevs))):
            raise InvalidInput('mixture parameters must be finite')
        if np.any(weights < 0) or np.any(np.abs(weights.sum(axis=-1) - 1.0) > WEIGHT_TOLERANCE):
            raise InvalidInput('mixture weights must be nonnegative and sum to 1')
        if np.any(stddevs < SIGMA_FLOOR):
            raise InvalidInput(f'mixture stddevs must be >= {SIGMA_FLOOR}')
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'stddevs', stddevs)

    @property
    def n_components(self):
        return self.weights.shape[-1]

    @property
    def batch_shape(self):
        return self.weights.shape[:-1]


@dataclass(frozen=True)
class SamplePathGradients:
    """dz/dpi_k, dz/dmu_k, dz/dsigma_k at a sample z; underflow marks clamped rows"""
    d_weights: np.ndarray
    d_means: np.ndarray
    d_stddevs: np.ndarray
    underflow: np.ndarray


def standard_normal_cdf(t):
    """Phi(t) through the complementary error function"""
    return 0.5 * erfc(-np.asarray(t, dtype=np.float64) / math.sqrt(2.0))


def _check_points(z):
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InvalidInput('invalid input')
    return z


def component_log_densities(gmm, z):
    """log N(z; mu_k, sigma_k^2) for every component, shape batch + (K,)"""
    z = _check_points(z)
    t = (z[..., None] - gmm.means) / gmm.stddevs
    return -0.5 * t * t - np.log(gmm.stddevs) - LOG_SQRT_2PI


def _log_weights(gmm):
    with np.errstate(divide='ignore'):
        return np.log(gmm.weights)


def mixture_log_prob(gmm, z):
    """log sum_k pi_k N(z; mu_k, sigma_k^2), accumulated in the log domain"""
    return logsumexp(_log_weights(gmm) + component_log_densities(gmm, z), axis=-1)


def mixture_cdf(gmm, z):
    """Standardization function S(z) = sum_k pi_k Phi((z - mu_k) / sigma_k)"""
    z = _check_points(z)
    t = (z[..., None] - gmm.means) / gmm.stddevs
    return np.clip(np.sum(gmm.weights * standard_normal_cdf(t), axis=-1), 0.0, 1.0)


def mixture_quantile(gmm, u, iterations=200):
    """Inverse of mixture_cdf by bisection; u must lie in (0, 1)"""
    u = np.asarray(u, dtype=np.float64)
    if not np.all((u > 0.0) & (u < 1.0)):
        raise InvalidInput('quantile levels must lie strictly inside (0, 1)')
    shape = np.broadcast_shapes(u.shape, gmm.batch_shape)
    lo = np.broadcast_to(np.min(gmm.means - 40.0 * gmm.stddevs, axis=-1), shape).copy()
    hi = np.broadcast_to(np.max(gmm.means + 40.0 * gmm.stddevs, axis=-1), shape).copy()
    u = np.broadcast_to(u, shape)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        below = mixture_cdf(gmm, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4.0 * np.finfo(np.float64).eps * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def sample_path_gradients(gmm, z):
    """
    Implicit reparameterization partials of z, evaluated at z.

    Differentiating S(z; params) = u at fixed u gives
    dz/dpi_k = -Phi(t_k) / q(z), dz/dmu_k = pi_k N_k / q(z) and
    dz/dsigma_k = pi_k t_k N_k / q(z) with t_k = (z - mu_k) / sigma_k.
    Rows whose density falls below DENSITY_FLOOR get zero gradients.
    """
    z = _check_points(z)
    t = (z[..., None] - gmm.means) / gmm.stddevs
    log_joint = _log_weights(gmm) + (-0.5 * t * t - np.log(gmm.stddevs) - LOG_SQRT_2PI)
    log_q = logsumexp(log_joint, axis=-1)
    underflow = log_q < math.log(DENSITY_FLOOR)
    safe_log_q = np.where(underflow, 0.0, log_q)[..., None]

    responsibility = np.exp(log_joint - safe_log_q)
    d_means = responsibility
    d_stddevs = responsibility * t
    d_weights = -standard_normal_cdf(t) * np.exp(-safe_log_q)

    mask = underflow[..., None]
    d_weights = np.where(mask, 0.0, d_weights)
    d_means = np.where(mask, 0.0, d_means)
    d_stddevs = np.where(mask, 0.0, d_stddevs)
    if np.any(underflow):
        logger.debug('clamped pathwise gradients for %d samples below the density floor', int(np.sum(underflow)))
    return SamplePathGradients(
        d_weights=d_weights, d_means=d_means, d_stddevs=d_stddevs, underflow=np.asarray(underflow),
    )


def mixture_sample(gmm, rng):
    """
    Draw z (component by inverse-CDF on the weights from one uniform, then a
    Gaussian from that component) and return it with its path gradients.
    """
    u = rng.random(gmm.batch_shape)
    cumulative = np.cumsum(gmm.weights, axis=-1)
    component = np.minimum(np.sum(cumulative < np.asarray(u)[..., None], axis=-1), gmm.n_components - 1)
    noise = rng.standard_normal(gmm.batch_shape)
    index = np.asarray(component)[..., None]
    mean = np.take_along_axis(gmm.means, index, axis=-1)[..., 0]
    stddev = np.take_along_axis(gmm.stddevs, index, axis=-1)[..., 0]
    z = mean + stddev * noise
    return z, sample_path_gradients(gmm, z)


def mixture_mean(gmm):
    return np.sum(gmm.weights * gmm.means, axis=-1)


@dataclass(frozen=True)
class LogProbPartials:
    """log q(z) with its partials in pi, mu, sigma and z"""
    log_prob: np.ndarray
    d_weights: np.ndarray
    d_means: np.ndarray
    d_stddevs: np.ndarray
    d_z: np.ndarray


def log_prob_partials(gmm, z):
    z = _check_points(z)
    t = (z[..., None] - gmm.means) / gmm.stddevs
    log_components = -0.5 * t * t - np.log(gmm.stddevs) - LOG_SQRT_2PI
    log_joint = _log_weights(gmm) + log_components
    log_q = logsumexp(log_joint, axis=-1)
    responsibility = np.exp(log_joint - log_q[..., None])
    return LogProbPartials(
        log_prob=log_q,
        d_weights=np.exp(log_components - log_q[..., None]),
        d_means=responsibility * t / gmm.stddevs,
        d_stddevs=responsibility * (t * t - 1.0) / gmm.stddevs,
        d_z=-np.sum(responsibility * t / gmm.stddevs, axis=-1),
    )
