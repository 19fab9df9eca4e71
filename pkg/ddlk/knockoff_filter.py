"""
Knockoff statistics, the data-dependent selection threshold, and FDP/power
accounting.

Statistics are oriented so that larger is better: for each feature j,
w_j = W(model, D_test) - W(model, D_test with column j replaced by its
knockoff), where W is the negated mean squared error for a real response
and the mean log-likelihood for a binary one.
"""

import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.linear_model import LogisticRegression, Ridge
from sklearn.metrics import log_loss, mean_squared_error
from sklearn.neural_network import MLPClassifier, MLPRegressor

from .exceptions import InvalidInput
from .utils import thread_budget

logger = logging.getLogger(__name__)

STATISTICS = ('hrt', 'mixture')
RESPONSE_MODELS = ('network', 'ridge')
TASKS = ('regression', 'classification')

NETWORK_HIDDEN_UNITS = 200
NETWORK_LEARNING_RATE = 1e-3
NETWORK_MAX_ITER = 100
NETWORK_PATIENCE = 10


@dataclass(frozen=True)
class KnockoffStatistics:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise InvalidInput('knockoff statistics must be finite')
        object.__setattr__(self, 'w', w)

    @property
    def d(self):
        return self.w.size


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple
    threshold: float
    nominal_level: float

    def to_dict(self, columns=None):
        record = {
            'level': self.nominal_level,
            'threshold': self.threshold,
            'selected': list(self.selected),
        }
        if columns is not None:
            record['selected_columns'] = [columns[j] for j in self.selected]
        return record


def knockoff_threshold(w, p):
    """
    tau_p = min{t : (1 + #{j: w_j <= -t}) / #{j: w_j >= t} <= p} over the
    candidates t in {|w_j| : w_j != 0}; infinity (nothing selected) when no
    candidate qualifies.
    """
    stats = w if isinstance(w, KnockoffStatistics) else KnockoffStatistics(w)
    if stats.d == 0:
        raise InvalidInput('cannot threshold an empty statistic vector')
    if not 0 < p < 1:
        raise InvalidInput(f'nominal level must lie in (0, 1), got {p}')
    values = stats.w
    ordered = np.sort(values)
    candidates = np.unique(np.abs(values[values != 0]))
    negatives = np.searchsorted(ordered, -candidates, side='right')
    positives = values.size - np.searchsorted(ordered, candidates, side='left')
    qualifies = np.zeros(candidates.size, dtype=bool)
    has_positive = positives > 0
    qualifies[has_positive] = (1.0 + negatives[has_positive]) / positives[has_positive] <= p
    if not np.any(qualifies):
        return SelectionResult((), float('inf'), float(p))
    tau = float(candidates[np.argmax(qualifies)])
    selected = tuple(int(j) for j in np.flatnonzero(values >= tau))
    return SelectionResult(selected, tau, float(p))


def fdp_and_power(selected, truth):
    """False discovery proportion and power of one selection"""
    selected = set(int(j) for j in selected)
    truth = set(int(j) for j in truth)
    fdp = len(selected - truth) / max(len(selected), 1)
    if not truth:
        logger.warning('empty truth set: power reported as 0')
        return fdp, 0.0
    return fdp, len(selected & truth) / len(truth)


def infer_task(y):
    """Binary 0/1 responses are classification, everything else regression"""
    levels = np.unique(np.asarray(y))
    if levels.size == 2 and set(levels.tolist()) <= {0.0, 1.0}:
        return 'classification'
    return 'regression'


class ResponseModel:
    """A fitted predictor of y from x with its performance measure"""

    def __init__(self, estimator, task):
        if task not in TASKS:
            raise InvalidInput(f'unknown task {task!r}')
        self.estimator = estimator
        self.task = task
        self.fitted = False

    def fit(self, x, y):
        self.estimator.fit(np.asarray(x, dtype=np.float64), np.asarray(y))
        self.fitted = True
        return self

    def score(self, x, y):
        """Larger is better: negated MSE or mean log-likelihood"""
        if not self.fitted:
            raise InvalidInput('response model has not been fitted')
        x = np.asarray(x, dtype=np.float64)
        if self.task == 'classification':
            proba = self.estimator.predict_proba(x)
            return -log_loss(y, proba, labels=self.estimator.classes_)
        return -mean_squared_error(y, self.estimator.predict(x))


def build_response_model(kind, task, seed):
    if kind not in RESPONSE_MODELS:
        raise InvalidInput(f'unknown response model {kind!r}; expected one of {RESPONSE_MODELS}')
    seed = int(seed)
    if kind == 'network':
        options = dict(
            hidden_layer_sizes=(NETWORK_HIDDEN_UNITS,),
            solver='adam',
            learning_rate_init=NETWORK_LEARNING_RATE,
            max_iter=NETWORK_MAX_ITER,
            early_stopping=True,
            n_iter_no_change=NETWORK_PATIENCE,
            random_state=seed,
        )
        estimator = MLPClassifier(**options) if task == 'classification' else MLPRegressor(**options)
    elif task == 'classification':
        estimator = LogisticRegression(max_iter=1000)
    else:
        estimator = Ridge(alpha=1.0)
    return ResponseModel(estimator, task)


@dataclass(frozen=True)
class ResponseModelSpec:
    kind: str = 'network'
    seed: int = 0

    def build(self, y):
        return build_response_model(self.kind, infer_task(y), self.seed)

    def fit(self, dataset):
        if dataset.y is None:
            raise InvalidInput('fitting a response model needs a response')
        return self.build(dataset.y).fit(dataset.x, dataset.y)


def _values(matrix):
    return np.asarray(getattr(matrix, 'values', matrix), dtype=np.float64)


def _aligned(dataset, knockoffs, name):
    xt = _values(knockoffs)
    if xt.shape != dataset.x.shape:
        raise InvalidInput(f'{name} knockoffs have shape {xt.shape}, covariates have {dataset.x.shape}')
    if dataset.y is None:
        raise InvalidInput(f'{name} set has no response')
    return xt


def swap_feature(x, xt, j):
    """Copy of x with column j replaced by the knockoff column"""
    swapped = np.array(x, dtype=np.float64)
    swapped[:, j] = np.asarray(xt)[:, j]
    return swapped


def hrt_statistics(response_model, test_set, knockoff_test_set):
    """Holdout performance gap of one fitted response model, feature by feature"""
    xt = _aligned(test_set, knockoff_test_set, 'test')
    baseline = response_model.score(test_set.x, test_set.y)
    w = [baseline - response_model.score(swap_feature(test_set.x, xt, j), test_set.y) for j in range(test_set.d)]
    return KnockoffStatistics(np.asarray(w))


def _mixture_statistic(j, train_set, train_xt, test_set, test_xt, model_spec):
    x = np.concatenate([train_set.x, swap_feature(train_set.x, train_xt, j)])
    y = np.concatenate([train_set.y, train_set.y])
    model = model_spec.build(y).fit(x, y)
    return model.score(test_set.x, test_set.y) - model.score(swap_feature(test_set.x, test_xt, j), test_set.y)


def mixture_statistics(train_set, knockoff_train_set, test_set, knockoff_test_set, model_spec, n_jobs=None):
    """
    One fresh response model per feature, fit on the training rows stacked
    with their copy that has column j replaced by its knockoff, then scored
    as in hrt_statistics.
    """
    train_xt = _aligned(train_set, knockoff_train_set, 'training')
    test_xt = _aligned(test_set, knockoff_test_set, 'test')
    if train_set.d != test_set.d:
        raise InvalidInput(f'training set has {train_set.d} features, test set {test_set.d}')
    n_jobs = thread_budget() if n_jobs is None else n_jobs
    w = Parallel(n_jobs=n_jobs)(
        delayed(_mixture_statistic)(j, train_set, train_xt, test_set, test_xt, model_spec)
        for j in range(train_set.d)
    )
    return KnockoffStatistics(np.asarray(w))


def compute_statistics(kind, train_set, knockoff_train_set, test_set, knockoff_test_set, model_spec, n_jobs=None):
    if kind == 'hrt':
        return hrt_statistics(model_spec.fit(train_set), test_set, knockoff_test_set)
    if kind == 'mixture':
        return mixture_statistics(train_set, knockoff_train_set, test_set, knockoff_test_set, model_spec, n_jobs)
    raise InvalidInput(f'unknown statistic {kind!r}; expected one of {STATISTICS}')


def select_over_levels(w, levels):
    return [knockoff_threshold(w, p) for p in levels]
