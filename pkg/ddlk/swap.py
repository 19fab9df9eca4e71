"""
Swapping coordinates between covariates and knockoffs.

A swap H exchanges x_j and xt_j for every j in H. Because a swap is a
permutation with unit Jacobian that is its own inverse, the density of the
swapped pair at (x, xt) is the original density at the swapped point, so
only the unswapped model ever needs scoring.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import InvalidInput

DEFAULT_TEMPERATURE = 0.5


@dataclass(frozen=True)
class SwapIndicator:
    """Hard bits (b_j = 1 means j in H) used in every forward computation; soft values only feed gradients"""
    bits: np.ndarray
    soft: np.ndarray = None

    def __post_init__(self):
        bits = np.asarray(self.bits).astype(bool)
        if bits.ndim != 1:
            raise InvalidInput('swap bits must be a vector')
        soft = bits.astype(np.float64) if self.soft is None else np.asarray(self.soft, dtype=np.float64)
        if soft.shape != bits.shape:
            raise InvalidInput('soft swap values must match the bits')
        object.__setattr__(self, 'bits', bits)
        object.__setattr__(self, 'soft', soft)

    @property
    def d(self):
        return self.bits.size

    @property
    def indices(self):
        return tuple(int(j) for j in np.flatnonzero(self.bits))


@dataclass
class SwapSampler:
    logits: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if not self.temperature > 0:
            raise InvalidInput('temperature must be positive')

    @classmethod
    def uniform(cls, d, temperature=DEFAULT_TEMPERATURE):
        """beta = 0: every coordinate swapped with probability 1/2"""
        return cls(np.zeros(d), temperature)

    @property
    def d(self):
        return self.logits.size


def empty_swap(d):
    return SwapIndicator(np.zeros(d, dtype=bool))


def full_swap(d):
    return SwapIndicator(np.ones(d, dtype=bool))


def singleton_swap(d, j):
    bits = np.zeros(d, dtype=bool)
    bits[j] = True
    return SwapIndicator(bits)


def symmetric_difference(first, second):
    """Swapping by first then second is the same as swapping by their symmetric difference"""
    if first.d != second.d:
        raise InvalidInput('swap indicators have different lengths')
    return SwapIndicator(np.logical_xor(first.bits, second.bits))


def apply_swap(x, xt, H):
    """[x, xt]_swap(H) for a pair of vectors or row-aligned matrices"""
    x = np.asarray(x, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if x.shape != xt.shape or x.shape[-1] != H.d:
        raise InvalidInput(f'cannot swap shapes {x.shape} and {xt.shape} with {H.d} bits')
    u = np.where(H.bits, xt, x)
    ut = np.where(H.bits, x, xt)
    return u, ut


def swap_log_prob(joint_logprob_fn, x, xt, H):
    """Log density of the H-swapped pair distribution at (x, xt)"""
    return joint_logprob_fn(*apply_swap(x, xt, H))


def swap_probabilities(sampler):
    """P(b_j = 1) = logistic(beta_j) under hard rounding"""
    return expit(sampler.logits)


def sample_swap(sampler, rng):
    """
    Binary concrete draw with a straight-through gradient. Two standard
    Gumbel variates per coordinate give soft = logistic((beta + g1 - g2) / T);
    the hard bit rounds it. The returned gradient is dsoft/dbeta.
    """
    gumbels = rng.gumbel(size=(2, sampler.d))
    soft = expit((sampler.logits + gumbels[0] - gumbels[1]) / sampler.temperature)
    bits = soft > 0.5
    pathgrad_logits = soft * (1.0 - soft) / sampler.temperature
    return SwapIndicator(bits, soft), pathgrad_logits
