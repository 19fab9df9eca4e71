"""
Stage 2: minimax fitting of the knockoff model.

Per mini-batch: draw knockoffs, draw one swap from the Gumbel sampler,
take one Adam descent step on phi and one Adam ascent step on beta for the
entropy-regularized swap objective

    A - B = mean[log q_joint(x) + (1 + lambda) log q_knockoff(xt | x)]
          - mean[log q_joint(u) + log q_knockoff(ut | u)],   [u, ut] = [x, xt]_swap(H).

Gradients in phi run through the sampled knockoffs (implicit
reparameterization) in both terms, including log q_joint(u). q_joint is
never updated here.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .autoregressive import (
    data_support, init_knockoff_model, knockoff_pathwise_backward, model_log_prob,
    model_log_prob_backward, sample_knockoffs,
)
from .exceptions import InvalidInput, NumericalAbort, TrainingDiverged
from .optim import AdamState, EarlyStopping, adam_step
from .swap import SwapIndicator, SwapSampler, apply_swap, full_swap, sample_swap
from .utils import spawn_streams

logger = logging.getLogger(__name__)

DIVERGENCE_GUARD = 1e6

__all__ = [
    'TrainConfig', 'ObjectiveReport', 'adam_step', 'ddlk_objective_batch',
    'validation_objective', 'fit_knockoff',
]


@dataclass
class TrainConfig:
    lam: float = 0.1
    lr_phi: float = 1e-3
    lr_beta: float = 1e-2
    lr_joint: float = 5e-4
    max_epochs_joint: int = 50
    max_epochs_knockoff: int = 250
    batch_size: int = 64
    patience: int = 10
    temperature: float = 0.5
    seed: int = 0
    n_components: int = 5
    hidden_units: int = 50
    min_delta: float = 0.0
    val_fraction: float = 0.15
    validation_swaps: int = 4

    def __post_init__(self):
        for name in ('lr_phi', 'lr_beta', 'lr_joint', 'temperature'):
            if not getattr(self, name) > 0:
                raise InvalidInput(f'{name} must be positive')
        if not self.lam >= 0:
            raise InvalidInput('lambda must be nonnegative')
        for name in ('max_epochs_joint', 'max_epochs_knockoff', 'batch_size', 'patience', 'n_components', 'hidden_units'):
            if int(getattr(self, name)) < 1:
                raise InvalidInput(f'{name} must be at least 1')
        if not 0 < self.val_fraction < 1:
            raise InvalidInput('val_fraction must lie in (0, 1)')

    @classmethod
    def from_dict(cls, values):
        """Build from a config mapping; 'lambda' is accepted for lam, unknown keys are ignored"""
        values = dict(values)
        if 'lambda' in values:
            values['lam'] = values.pop('lambda')
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known and v is not None})

    def to_dict(self):
        values = asdict(self)
        values['lambda'] = values.pop('lam')
        return values


@dataclass
class ObjectiveReport:
    A: float
    B: float
    objective: float
    epoch: int
    validation: Optional[float] = None

    @classmethod
    def from_terms(cls, A, B, epoch, validation=None):
        A, B = float(A), float(B)
        return cls(A=A, B=B, objective=A - B, epoch=epoch, validation=validation)

    def to_dict(self):
        return asdict(self)


def ddlk_objective_batch(theta_model, phi_model, batch, H, lam, rng, epoch=0):
    """
    Batch value of A - B and its gradients.

    Returns (report, grads_phi, grad_beta_contrib): grads_phi is one flat
    gradient per knockoff conditional (of A - B, to be descended);
    grad_beta_contrib is d(A - B)/d(soft swap values) through the
    straight-through relaxation. Multiplying it by the sampler's dsoft/dbeta
    gives the beta gradient.
    """
    x = np.asarray(batch, dtype=np.float64)
    n = x.shape[0]
    weight = 1.0 / n
    xt, trace = sample_knockoffs(phi_model, x, rng)
    u, ut = apply_swap(x, xt, H)

    joint_x = model_log_prob(theta_model, None, x)
    knock_x = model_log_prob_backward(phi_model, x, xt, (1.0 + lam) * weight)
    joint_u = model_log_prob_backward(theta_model, None, u, -weight)
    knock_u = model_log_prob_backward(phi_model, u, ut, -weight)

    A = np.mean(joint_x + (1.0 + lam) * knock_x.logp)
    B = np.mean(joint_u.logp + knock_u.logp)
    if not (np.isfinite(A) and np.isfinite(B)):
        raise NumericalAbort('non-finite knockoff objective', epoch=epoch)

    d_u = joint_u.d_v + knock_u.d_base
    d_ut = knock_u.d_v
    g_xt = knock_x.d_v + np.where(H.bits, d_u, d_ut)
    path_grads, _ = knockoff_pathwise_backward(phi_model, trace, g_xt)
    grads_phi = [a + b + c for a, b, c in zip(knock_x.grads, knock_u.grads, path_grads)]
    grad_beta_contrib = np.sum((d_u - d_ut) * (xt - x), axis=0)

    return ObjectiveReport.from_terms(A, B, epoch), grads_phi, grad_beta_contrib


def validation_objective(theta_model, phi_model, data_val, swaps, rng):
    """A - B without the entropy bonus, averaged over a fixed panel of swaps"""
    x = np.asarray(data_val, dtype=np.float64)
    xt, _ = sample_knockoffs(phi_model, x, rng)
    unswapped = np.mean(model_log_prob(theta_model, None, x) + model_log_prob(phi_model, x, xt))
    values = []
    for H in swaps:
        u, ut = apply_swap(x, xt, H)
        values.append(unswapped - np.mean(model_log_prob(theta_model, None, u) + model_log_prob(phi_model, u, ut)))
    return float(np.mean(values))


def _validation_panel(d, count, rng):
    panel = [full_swap(d)]
    for _ in range(count):
        panel.append(SwapIndicator(rng.random(d) < 0.5))
    return panel


def fit_knockoff(theta_model, data_train, data_val, config, rng, phi_model=None, update_phi=True):
    """
    Algorithm loop for phi and beta. Early stopping follows the validation
    objective (entropy bonus removed) and the best-validation phi and
    sampler are returned with the per-epoch history. Epoch 0 of the history
    is the untrained model scored on the validation split.

    With update_phi=False only beta is trained (the adversary against a
    frozen knockoff model) for max_epochs_knockoff epochs.
    """
    train = np.asarray(data_train, dtype=np.float64)
    val = np.asarray(data_val, dtype=np.float64)
    n, d = train.shape
    if theta_model.base_dim != 0 or theta_model.d != d or val.ndim != 2 or val.shape[1] != d:
        raise InvalidInput(
            f'joint model has {theta_model.d} features; training data {train.shape}, validation {val.shape}'
        )

    init_rng, shuffle_rng, sample_rng, swap_rng, panel_rng = spawn_streams(rng, 5)
    val_seed = int(rng.integers(0, 2**63 - 1))
    if phi_model is None:
        phi_model = init_knockoff_model(d, data_support(train), config, init_rng, columns=theta_model.columns)
    else:
        phi_model = phi_model.copy()
    sampler = SwapSampler.uniform(d, config.temperature)
    panel = _validation_panel(d, config.validation_swaps, panel_rng)

    def score_validation():
        return validation_objective(theta_model, phi_model, val, panel, np.random.default_rng(val_seed))

    states = [AdamState.zeros(net.n_parameters) for net in phi_model.conditionals]
    beta_state = AdamState.zeros(d)
    stopper = EarlyStopping(patience=config.patience, min_delta=config.min_delta)

    initial = score_validation()
    history = [ObjectiveReport.from_terms(initial, 0.0, 0, validation=initial)]
    stopper(initial)
    best_phi, best_sampler = phi_model.copy(), SwapSampler(sampler.logits.copy(), sampler.temperature)
    logger.info('fitting knockoff model: %d rows, %d features, lambda=%g, initial validation %.5f', n, d, config.lam, initial)

    for epoch in range(1, config.max_epochs_knockoff + 1):
        order = shuffle_rng.permutation(n)
        a_terms, b_terms = [], []
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            H, dsoft = sample_swap(sampler, swap_rng)
            report, grads_phi, grad_soft = ddlk_objective_batch(
                theta_model, phi_model, train[rows], H, config.lam, sample_rng, epoch,
            )
            if abs(report.objective) > DIVERGENCE_GUARD:
                raise TrainingDiverged(
                    f'knockoff objective {report.objective:.3g} beyond {DIVERGENCE_GUARD:g}',
                    history=history, epoch=epoch,
                )
            if update_phi:
                for j, net in enumerate(phi_model.conditionals):
                    if not np.all(np.isfinite(grads_phi[j])):
                        raise NumericalAbort('non-finite knockoff gradient', feature=j, epoch=epoch)
                    net.params, states[j] = adam_step(net.params, grads_phi[j], states[j], config.lr_phi)
            sampler.logits, beta_state = adam_step(sampler.logits, -grad_soft * dsoft, beta_state, config.lr_beta)
            a_terms.append(report.A)
            b_terms.append(report.B)

        validation = score_validation()
        history.append(ObjectiveReport.from_terms(np.mean(a_terms), np.mean(b_terms), epoch, validation=validation))
        logger.debug('knockoff epoch %d: objective %.5f validation %.5f', epoch, history[-1].objective, validation)
        if not update_phi:
            best_phi, best_sampler = phi_model, sampler
            continue
        if stopper(validation):
            best_phi = phi_model.copy()
            best_sampler = SwapSampler(sampler.logits.copy(), sampler.temperature)
        if stopper.early_stop:
            logger.info('knockoff model stopped early after epoch %d (best validation %.5f)', epoch, stopper.best_loss)
            break

    best_phi.history = [report.to_dict() for report in history]
    return best_phi, best_sampler, history
