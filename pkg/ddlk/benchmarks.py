"""
Synthetic benchmarks and the end-to-end experiment runner.

Three designs: AR(rho) Gaussian covariates, a mixture of AR Gaussians with
shifted centers, and AR Gaussian covariates with the nonlinear gene
response. Important features are the first m columns. Every replication
owns a random stream derived from (master seed, replication seed), and only
the selection stage is given the important set.
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .autoregressive import fit_joint, sample_knockoffs
from .datasets import DEFAULT_SPLIT, Dataset, Standardizer, split_dataset
from .diagnostics import marginal_histograms, null_sign_balance
from .exceptions import InvalidInput, KnockoffForgeError
from .knockoff_filter import (
    RESPONSE_MODELS, STATISTICS, ResponseModelSpec, compute_statistics, fdp_and_power, knockoff_threshold,
)
from .trainer import TrainConfig, fit_knockoff
from .utils import seed_stream, spawn_streams, thread_budget

logger = logging.getLogger(__name__)

KINDS = ('gaussian', 'mixture', 'gene_response')
KNOCKOFF_SOURCES = ('ddlk', 'oracle')
P_GRID = tuple(round(0.05 * k, 2) for k in range(1, 11))

COEFFICIENT_SCALE = 100.0
MIXTURE_CENTERS = (0.0, 20.0, 40.0)
MIXTURE_WEIGHTS = (0.4, 0.2, 0.4)
MIXTURE_RHOS = (0.6, 0.4, 0.2)


@dataclass
class BenchmarkSpec:
    kind: str = 'gaussian'
    n_samples: int = 2000
    d: int = 30
    m: int = 10
    rho: tuple = (0.6,)
    mixture_centers: tuple = MIXTURE_CENTERS
    mixture_weights: tuple = MIXTURE_WEIGHTS
    lam: float = 0.1
    split: tuple = DEFAULT_SPLIT
    seeds: tuple = tuple(range(10))
    noise: float = 1.0

    def __post_init__(self):
        self.rho = tuple(float(r) for r in np.atleast_1d(self.rho))
        self.mixture_centers = tuple(float(c) for c in self.mixture_centers)
        self.mixture_weights = tuple(float(w) for w in self.mixture_weights)
        self.split = tuple(float(s) for s in self.split)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.kind not in KINDS:
            raise InvalidInput(f'unknown benchmark kind {self.kind!r}; expected one of {KINDS}')
        if not 0 <= self.m <= self.d or self.d < 1 or self.n_samples < 10:
            raise InvalidInput(f'need 0 <= m <= d and at least 10 samples, got N={self.n_samples}, d={self.d}, m={self.m}')
        if abs(sum(self.split) - 1.0) > 1e-9 or len(self.split) != 3:
            raise InvalidInput(f'split must have three parts summing to 1, got {self.split}')
        if any(abs(r) >= 1 for r in self.rho):
            raise InvalidInput('AR correlations must satisfy |rho| < 1')
        if self.kind == 'mixture':
            k = len(self.mixture_centers)
            if len(self.mixture_weights) != k or len(self.rho) not in (1, k):
                raise InvalidInput('mixture centers, weights and correlations must have matching lengths')
            if abs(sum(self.mixture_weights) - 1.0) > 1e-9 or min(self.mixture_weights) < 0:
                raise InvalidInput('mixture weights must be a probability vector')
        if self.kind == 'gene_response' and self.m % 4:
            raise InvalidInput(f'the gene response needs m divisible by 4, got {self.m}')
        if not self.seeds:
            raise InvalidInput('a benchmark needs at least one seed')

    @property
    def truth(self):
        return frozenset(range(self.m))

    def to_dict(self):
        values = asdict(self)
        values['lambda'] = values.pop('lam')
        return values


@dataclass
class MethodConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    statistic: str = 'hrt'
    response_model: str = 'network'
    knockoffs: str = 'ddlk'
    levels: tuple = P_GRID

    def __post_init__(self):
        self.levels = tuple(float(p) for p in self.levels)
        if self.statistic not in STATISTICS:
            raise InvalidInput(f'unknown statistic {self.statistic!r}')
        if self.response_model not in RESPONSE_MODELS:
            raise InvalidInput(f'unknown response model {self.response_model!r}')
        if self.knockoffs not in KNOCKOFF_SOURCES:
            raise InvalidInput(f'unknown knockoff source {self.knockoffs!r}')
        if not self.levels or any(not 0 < p < 1 for p in self.levels):
            raise InvalidInput('nominal levels must lie in (0, 1)')

    def to_dict(self):
        return {
            'train': self.train.to_dict(),
            'statistic': self.statistic,
            'response_model': self.response_model,
            'knockoffs': self.knockoffs,
            'levels': list(self.levels),
        }


@dataclass
class SeedResult:
    seed: int
    w: np.ndarray
    records: list
    null_sign_balance: dict
    history: list = field(default_factory=list)
    test_x: Optional[np.ndarray] = None
    test_xt: Optional[np.ndarray] = None

    def to_dict(self):
        return {
            'seed': self.seed,
            'w': self.w,
            'records': self.records,
            'null_sign_balance': self.null_sign_balance,
            'history': self.history,
        }


@dataclass
class ExperimentResult:
    spec: BenchmarkSpec
    method: MethodConfig
    seeds: list
    failed: list

    @property
    def levels(self):
        return self.method.levels

    def table(self):
        """One row per (seed, level) from the raw selections"""
        rows = [dict(seed=result.seed, **record) for result in self.seeds for record in result.records]
        return pd.DataFrame(rows, columns=['seed', 'level', 'fdp', 'power', 'threshold', 'n_selected', 'selected'])

    def curve(self):
        """Mean and standard error of FDP and power per nominal level"""
        rows = []
        for i, p in enumerate(self.levels):
            fdp = np.array([result.records[i]['fdp'] for result in self.seeds])
            power = np.array([result.records[i]['power'] for result in self.seeds])
            rows.append({
                'p': p,
                'mean_fdp': _mean(fdp),
                'se_fdp': _standard_error(fdp),
                'mean_power': _mean(power),
                'se_power': _standard_error(power),
            })
        return pd.DataFrame(rows, columns=['p', 'mean_fdp', 'se_fdp', 'mean_power', 'se_power'])

    def to_dict(self):
        return {
            'spec': self.spec.to_dict(),
            'method': self.method.to_dict(),
            'seeds': [result.to_dict() for result in self.seeds],
            'failed': self.failed,
        }


def _mean(values):
    return float(np.mean(values)) if values.size else float('nan')


def _standard_error(values):
    if values.size < 2:
        return 0.0 if values.size else float('nan')
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def ar_covariance(d, rho):
    """Sigma_ij = rho^|i - j|"""
    index = np.arange(d)
    return float(rho) ** np.abs(index[:, None] - index[None, :])


def _cholesky(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise InvalidInput('covariance matrix is not positive definite')


def _coefficients(spec, rng):
    """+-100/sqrt(N) Rademacher coefficients on the first m features"""
    alpha = np.zeros(spec.d)
    signs = rng.choice([-1.0, 1.0], size=spec.m)
    alpha[:spec.m] = COEFFICIENT_SCALE / np.sqrt(spec.n_samples) * signs
    return alpha


def _linear_response(x, alpha, noise, rng):
    return x @ alpha + noise * rng.standard_normal(x.shape[0])


def gen_gaussian(spec, rng):
    if spec.kind != 'gaussian':
        raise InvalidInput(f'gen_gaussian got a {spec.kind!r} spec')
    sigma = ar_covariance(spec.d, spec.rho[0])
    x = rng.standard_normal((spec.n_samples, spec.d)) @ _cholesky(sigma).T
    alpha = _coefficients(spec, rng)
    y = _linear_response(x, alpha, spec.noise, rng)
    return Dataset(x, y, truth=spec.truth, metadata={'coefficients': alpha})


def gen_mixture(spec, rng):
    if spec.kind != 'mixture':
        raise InvalidInput(f'gen_mixture got a {spec.kind!r} spec')
    k = len(spec.mixture_centers)
    rhos = spec.rho if len(spec.rho) == k else spec.rho * k
    factors = [_cholesky(ar_covariance(spec.d, rho)) for rho in rhos]
    components = rng.choice(k, size=spec.n_samples, p=np.asarray(spec.mixture_weights))
    noise = rng.standard_normal((spec.n_samples, spec.d))
    x = np.empty_like(noise)
    for c in range(k):
        rows = components == c
        x[rows] = spec.mixture_centers[c] + noise[rows] @ factors[c].T
    alpha = _coefficients(spec, rng)
    y = _linear_response(x, alpha, spec.noise, rng)
    return Dataset(x, y, truth=spec.truth, metadata={'coefficients': alpha, 'components': components})


@dataclass(frozen=True)
class GeneCoefficients:
    """phi1..phi6, one value per block of four important features"""
    phi1: np.ndarray
    phi2: np.ndarray
    phi3: np.ndarray
    phi4: np.ndarray
    phi5: np.ndarray
    phi6: np.ndarray

    @classmethod
    def draw(cls, m, rng):
        if m % 4:
            raise InvalidInput(f'the gene response needs m divisible by 4, got {m}')
        blocks = m // 4
        first = rng.normal(1.0, 1.0, size=(2, blocks))
        rest = rng.normal(2.0, 1.0, size=(4, blocks))
        return cls(first[0], first[1], rest[0], rest[1], rest[2], rest[3])

    @classmethod
    def constant(cls, m, value=1.0):
        ones = np.full(m // 4, float(value))
        return cls(ones, ones, ones, ones, ones, ones)

    @property
    def m(self):
        return 4 * np.asarray(self.phi1).size


def gene_response(x, phis, noise):
    """
    Sum over blocks k of phi1 x_a + phi3 x_b + phi4 x_a x_b + phi5 tanh(phi2 x_c + phi6 x_e),
    (a, b, c, e) the k-th block of four leading coordinates, plus noise.
    Works on one vector or on the rows of a matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    m = phis.m
    if x.shape[-1] < m:
        raise InvalidInput(f'gene response needs at least {m} features, got {x.shape[-1]}')
    a, b, c, e = (x[..., i:m:4] for i in range(4))
    terms = phis.phi1 * a + phis.phi3 * b + phis.phi4 * a * b + phis.phi5 * np.tanh(phis.phi2 * c + phis.phi6 * e)
    return np.sum(terms, axis=-1) + noise


def gen_gene_response(spec, rng):
    if spec.kind != 'gene_response':
        raise InvalidInput(f'gen_gene_response got a {spec.kind!r} spec')
    sigma = ar_covariance(spec.d, spec.rho[0])
    x = rng.standard_normal((spec.n_samples, spec.d)) @ _cholesky(sigma).T
    phis = GeneCoefficients.draw(spec.m, rng)
    y = gene_response(x, phis, spec.noise * rng.standard_normal(spec.n_samples))
    return Dataset(x, y, truth=spec.truth, metadata={'coefficients': asdict(phis)})


GENERATORS = {
    'gaussian': gen_gaussian,
    'mixture': gen_mixture,
    'gene_response': gen_gene_response,
}


def generate(spec, rng):
    return GENERATORS[spec.kind](spec, rng)


def sample_gaussian_knockoffs(x, sigma, rng):
    """
    Exact equicorrelated knockoffs for x ~ N(0, sigma) with unit diagonal:
    D = s I with s = min(1, 2 lambda_min(sigma)), and
    xt | x ~ N(x - x sigma^-1 D, 2D - D sigma^-1 D).
    """
    x = np.asarray(x, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    d = sigma.shape[0]
    s = min(1.0, 2.0 * float(np.linalg.eigvalsh(sigma)[0]))
    D = s * np.eye(d)
    sigma_inv_d = np.linalg.solve(sigma, D)
    mean = x - x @ sigma_inv_d
    cov = 2.0 * D - D @ sigma_inv_d
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (cov + cov.T))
    root = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
    return mean + rng.standard_normal(x.shape) @ root.T


def _strip_truth(dataset):
    return Dataset(dataset.x, dataset.y, dataset.columns)


def _ddlk_knockoffs(train, val, others, config, rng, n_jobs):
    """Fit both stages on standardized data; returns knockoffs of the requested splits on the original scale"""
    joint_rng, knockoff_rng, sample_rng = spawn_streams(rng, 3)
    scaler = Standardizer.fit(train.x)
    z_train, z_val = scaler.transform(train.x), scaler.transform(val.x)
    theta = fit_joint(z_train, z_val, config, joint_rng, columns=train.columns, n_jobs=n_jobs)
    phi, _, history = fit_knockoff(theta, z_train, z_val, config, knockoff_rng)
    knockoffs = []
    for dataset in others:
        xt, _ = sample_knockoffs(phi, scaler.transform(dataset.x), sample_rng)
        knockoffs.append(scaler.inverse_transform(xt))
    return knockoffs, [report.to_dict() for report in history]


def run_seed(spec, method, seed, master_seed, n_jobs=1):
    """One replication: data, split, both fitting stages, statistics, selections"""
    data_rng, split_rng, fit_rng, stat_rng = spawn_streams(seed_stream(master_seed, seed), 4)
    dataset = generate(spec, data_rng)
    truth = dataset.truth
    train, val, test = (_strip_truth(part) for part in split_dataset(dataset, split_rng, spec.split))
    config = replace(method.train, lam=spec.lam)

    history = []
    if method.knockoffs == 'oracle':
        if spec.kind == 'mixture':
            raise InvalidInput('oracle knockoffs are only available for AR Gaussian covariates')
        sigma = ar_covariance(spec.d, spec.rho[0])
        train_xt = sample_gaussian_knockoffs(train.x, sigma, fit_rng)
        test_xt = sample_gaussian_knockoffs(test.x, sigma, fit_rng)
    else:
        (train_xt, test_xt), history = _ddlk_knockoffs(train, val, (train, test), config, fit_rng, n_jobs)

    model_spec = ResponseModelSpec(method.response_model, seed=int(stat_rng.integers(0, 2**31 - 1)))
    stats = compute_statistics(method.statistic, train, train_xt, test, test_xt, model_spec, n_jobs=n_jobs)

    records = []
    for p in method.levels:
        selection = knockoff_threshold(stats, p)
        fdp, power = fdp_and_power(selection.selected, truth)
        records.append({
            'level': p,
            'fdp': fdp,
            'power': power,
            'threshold': selection.threshold,
            'n_selected': len(selection.selected),
            'selected': list(selection.selected),
        })
    balance = null_sign_balance(stats, truth).to_dict()
    return SeedResult(seed, stats.w, records, balance, history, test.x, test_xt)


def _guarded_seed(spec, method, seed, master_seed, n_jobs):
    try:
        return run_seed(spec, method, seed, master_seed, n_jobs)
    except (KnockoffForgeError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        logger.warning('benchmark seed %d failed: %s', seed, exc)
        return {'seed': seed, 'error': f'{type(exc).__name__}: {exc}'}


def run_experiment(spec, method_config, rng=None, n_jobs=None):
    """
    Run every replication seed of the benchmark. The master seed comes from rng
    when given, otherwise from the method's TrainConfig. Failed seeds are
    recorded and the run continues.
    """
    master_seed = method_config.train.seed if rng is None else int(rng.integers(0, 2**63 - 1))
    n_jobs = thread_budget() if n_jobs is None else n_jobs
    inner_jobs = 1 if n_jobs > 1 else None
    logger.info('benchmark %s: %d seeds, statistic %s, knockoffs %s', spec.kind, len(spec.seeds), method_config.statistic, method_config.knockoffs)
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_guarded_seed)(spec, method_config, seed, master_seed, inner_jobs) for seed in spec.seeds
    )
    seeds = [outcome for outcome in outcomes if isinstance(outcome, SeedResult)]
    failed = [outcome for outcome in outcomes if isinstance(outcome, dict)]
    return ExperimentResult(spec, method_config, seeds, failed)


def histogram_frames(result, bins=50):
    """Marginal histograms of test data against its knockoffs, per successful seed"""
    names = [f'x{j + 1}' for j in range(result.spec.d)]
    return {
        seed_result.seed: marginal_histograms(seed_result.test_x, seed_result.test_xt, names, bins)
        for seed_result in result.seeds
    }


def fdr_rmse(curve, levels=None):
    """Root mean squared gap between the nominal level and the mean FDP"""
    levels = curve['p'].to_numpy() if levels is None else np.asarray(levels, dtype=np.float64)
    gap = curve['mean_fdp'].to_numpy() - levels
    return float(np.sqrt(np.mean(gap * gap)))


def run_entropy_sweep(spec, method_config, lambdas, rhos, rng=None):
    """FDR calibration over a lambda x rho grid; one row per cell"""
    rows = []
    for rho in rhos:
        for lam in lambdas:
            cell = replace(spec, rho=(rho,), lam=lam)
            result = run_experiment(cell, method_config, rng)
            curve = result.curve()
            rows.append({
                'lambda': lam,
                'rho': rho,
                'fdr_rmse': fdr_rmse(curve) if result.seeds else float('nan'),
                'n_failed': len(result.failed),
            })
            logger.info('entropy sweep lambda=%g rho=%g: rmse %.4f', lam, rho, rows[-1]['fdr_rmse'])
    return pd.DataFrame(rows, columns=['lambda', 'rho', 'fdr_rmse', 'n_failed'])
