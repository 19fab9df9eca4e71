"""Checks on fitted knockoffs: swap-property probe, null sign balance, entropy, marginals"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy.signal import find_peaks
from scipy.stats import binomtest, gaussian_kde
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import PolynomialFeatures, StandardScaler

from .autoregressive import model_log_prob, sample_knockoffs
from .exceptions import InvalidInput

logger = logging.getLogger(__name__)

DEFAULT_BINS = 50


@dataclass(frozen=True)
class NullSignBalance:
    n_nonzero: int
    n_positive: int
    fraction_positive: Optional[float]
    p_value: float

    def to_dict(self):
        return {
            'n_nonzero': self.n_nonzero,
            'n_positive': self.n_positive,
            'fraction_positive': self.fraction_positive,
            'p_value': self.p_value,
        }


def null_sign_balance(w, truth=None):
    """
    Share of positive signs among nonzero null statistics, with a two-sided
    binomial test against 1/2. Without a truth set every feature counts.
    """
    w = np.asarray(getattr(w, 'w', w), dtype=np.float64)
    nulls = np.ones(w.size, dtype=bool)
    if truth is not None:
        nulls[list(truth)] = False
    nonzero = w[nulls & (w != 0)]
    if nonzero.size == 0:
        return NullSignBalance(0, 0, None, 1.0)
    positive = int(np.sum(nonzero > 0))
    result = binomtest(positive, nonzero.size, 0.5)
    return NullSignBalance(int(nonzero.size), positive, positive / nonzero.size, float(result.pvalue))


def swap_auc_probe(x, xt, seed, test_fraction=0.3):
    """
    Held-out AUC of a logistic classifier (degree-2 features) telling
    [x, xt] rows from their full swap [xt, x]. 0.5 means indistinguishable.
    """
    x = np.asarray(x, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if x.shape != xt.shape or x.ndim != 2:
        raise InvalidInput(f'probe needs matching matrices, got {x.shape} and {xt.shape}')
    rng = np.random.default_rng(seed)
    order = rng.permutation(x.shape[0])
    n_test = max(1, int(round(test_fraction * x.shape[0])))
    test_rows, train_rows = order[:n_test], order[n_test:]
    if train_rows.size < 2:
        raise InvalidInput('too few rows for a swap probe')

    def pairs(rows):
        original = np.hstack([x[rows], xt[rows]])
        swapped = np.hstack([xt[rows], x[rows]])
        labels = np.concatenate([np.zeros(rows.size), np.ones(rows.size)])
        return np.vstack([original, swapped]), labels

    train_features, train_labels = pairs(train_rows)
    test_features, test_labels = pairs(test_rows)
    probe = make_pipeline(
        PolynomialFeatures(degree=2, include_bias=False),
        StandardScaler(),
        LogisticRegression(max_iter=2000),
    )
    probe.fit(train_features, train_labels)
    auc = roc_auc_score(test_labels, probe.predict_proba(test_features)[:, 1])
    logger.info('swap probe AUC %.4f on %d held-out rows', auc, n_test)
    return float(auc)


def conditional_entropy_estimate(kmodel, x, rng):
    """Monte-Carlo estimate of H(xt | x): -mean log q_knockoff(xt | x) over fresh draws"""
    x = np.asarray(x, dtype=np.float64)
    xt, _ = sample_knockoffs(kmodel, x, rng)
    return float(-np.mean(model_log_prob(kmodel, x, xt)))


def marginal_histograms(x, xt, names, bins=DEFAULT_BINS):
    """Per-feature histogram frames (shared edges) of the data and its knockoffs"""
    x = np.asarray(x, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    if x.shape != xt.shape or x.shape[1] != len(names):
        raise InvalidInput('histograms need matching data, knockoffs and names')
    frames = {}
    for j, name in enumerate(names):
        edges = np.histogram_bin_edges(np.concatenate([x[:, j], xt[:, j]]), bins=bins)
        data_counts, _ = np.histogram(x[:, j], bins=edges)
        knockoff_counts, _ = np.histogram(xt[:, j], bins=edges)
        frames[name] = pd.DataFrame({
            'bin_left': edges[:-1],
            'bin_right': edges[1:],
            'data_count': data_counts,
            'knockoff_count': knockoff_counts,
        })
    return frames


def marginal_modes(values, grid_size=512, min_prominence=0.05):
    """Locations of the kernel-density peaks of a sample, relative prominence above min_prominence"""
    values = np.asarray(values, dtype=np.float64)
    grid = np.linspace(values.min(), values.max(), grid_size)
    density = gaussian_kde(values)(grid)
    peaks, _ = find_peaks(density, prominence=min_prominence * density.max())
    return grid[peaks]
