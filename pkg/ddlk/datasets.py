"""Covariate matrices, CSV ingestion, splitting and per-column standardization"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .exceptions import InvalidInput

logger = logging.getLogger(__name__)

DEFAULT_SPLIT = (0.70, 0.15, 0.15)
KNOCKOFF_SUFFIX = '_knockoff'


@dataclass
class DataMatrix:
    values: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise InvalidInput(f'a data matrix must be 2-d, got shape {self.values.shape}')
        if not self.columns:
            self.columns = tuple(f'x{j + 1}' for j in range(self.values.shape[1]))
        self.columns = tuple(str(name) for name in self.columns)
        if len(self.columns) != self.values.shape[1]:
            raise InvalidInput(f'{len(self.columns)} column names for {self.values.shape[1]} columns')
        if not np.all(np.isfinite(self.values)):
            raise InvalidInput('data matrix contains missing or non-finite values')

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_columns(self):
        return self.values.shape[1]

    def take(self, rows):
        return DataMatrix(self.values[rows], self.columns)


@dataclass
class Dataset:
    """Covariates with an optional response and, for simulated data, the important feature set"""
    x: np.ndarray
    y: Optional[np.ndarray] = None
    columns: tuple = ()
    truth: Optional[frozenset] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        matrix = DataMatrix(self.x, self.columns)
        self.x, self.columns = matrix.values, matrix.columns
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
            if self.y.shape[0] != self.x.shape[0]:
                raise InvalidInput(f'response has {self.y.shape[0]} rows, covariates have {self.x.shape[0]}')
            if not np.all(np.isfinite(self.y)):
                raise InvalidInput('response contains missing or non-finite values')
        if self.truth is not None:
            self.truth = frozenset(int(j) for j in self.truth)

    @property
    def n_rows(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def matrix(self):
        return DataMatrix(self.x, self.columns)

    def take(self, rows):
        y = None if self.y is None else self.y[rows]
        return Dataset(self.x[rows], y, self.columns, self.truth, dict(self.metadata))


def _numeric_column(frame, name):
    raw = frame[name]
    values = pd.to_numeric(raw, errors='coerce')
    bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=np.float64, na_value=np.nan))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        cell = raw.iloc[row]
        reason = 'missing value' if pd.isna(cell) or str(cell).strip() == '' else f'non-numeric value {cell!r}'
        raise InvalidInput(f'{reason} in CSV', row=row + 1, column=name)
    return values.to_numpy(dtype=np.float64)


def read_frame(path):
    """Headered CSV as strings; rows are reported 1-based excluding the header"""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise InvalidInput(f'no such file: {path}')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InvalidInput(f'cannot parse {path}: {exc}')
    if frame.shape[0] == 0 or frame.shape[1] == 0:
        raise InvalidInput(f'{path} has no data rows')
    return frame


def read_covariates(path, response=None, exclude=()):
    """
    Read the covariates of a CSV. The response column, when named and
    present, is returned raw and never parsed as a covariate.
    Returns (DataMatrix, response column or None).
    """
    frame = read_frame(path)
    skipped = set(exclude)
    response_column = None
    if response is not None and response in frame.columns:
        response_column = frame[response]
        skipped.add(response)
    names = [name for name in frame.columns if name not in skipped]
    if not names:
        raise InvalidInput(f'{path} has no covariate columns')
    values = np.column_stack([_numeric_column(frame, name) for name in names])
    return DataMatrix(values, tuple(names)), response_column


def read_dataset(path, response):
    """Covariates plus a required numeric response column"""
    matrix, response_column = read_covariates(path, response=response)
    if response_column is None:
        raise InvalidInput(f'response column {response!r} not found in {path}')
    y = _numeric_column(response_column.to_frame(), response)
    return Dataset(matrix.values, y, matrix.columns)


def split_rows(n, rng, fractions=DEFAULT_SPLIT):
    """Shuffled index arrays for consecutive fractions of n rows; the last part takes the remainder"""
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise InvalidInput(f'split fractions must be positive and sum to 1, got {fractions.tolist()}')
    order = rng.permutation(n)
    cuts = np.floor(np.cumsum(fractions)[:-1] * n).astype(int)
    parts = np.split(order, cuts)
    if any(part.size == 0 for part in parts):
        raise InvalidInput(f'{n} rows are too few for a {len(fractions)}-way split')
    return parts


def split_dataset(dataset, rng, fractions=DEFAULT_SPLIT):
    return [dataset.take(rows) for rows in split_rows(dataset.n_rows, rng, fractions)]


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if self.mean.shape != self.scale.shape or np.any(self.scale <= 0):
            raise InvalidInput('standardization needs matching mean and positive scale vectors')

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=np.float64)
        scale = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(scale > 0, scale, 1.0))

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def inverse_transform(self, z):
        return np.asarray(z, dtype=np.float64) * self.scale + self.mean


def knockoff_frame(xt, columns, response_column=None):
    """Knockoff CSV contents: '<name>_knockoff' columns, the raw response echoed last when given"""
    frame = pd.DataFrame(np.asarray(xt), columns=[f'{name}{KNOCKOFF_SUFFIX}' for name in columns])
    if response_column is not None:
        frame[response_column.name] = response_column.to_numpy()
    return frame


def read_knockoffs(path, columns):
    """Knockoff columns matching `columns`, in that order"""
    frame = read_frame(path)
    wanted = [f'{name}{KNOCKOFF_SUFFIX}' for name in columns]
    missing = [name for name in wanted if name not in frame.columns]
    if missing:
        raise InvalidInput(f'{path} lacks knockoff columns {missing}')
    values = np.column_stack([_numeric_column(frame, name) for name in wanted])
    return DataMatrix(values, tuple(wanted))
