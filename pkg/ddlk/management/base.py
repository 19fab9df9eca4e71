import logging
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand

from ..datasets import read_covariates, split_rows
from ..exceptions import InvalidInput
from ..forms import load_run_config
from ..utils import seed_stream

logger = logging.getLogger(__name__)

DEFAULT_RESPONSE = 'y'

# Stream keys under the run seed, one per command stage
SPLIT_STREAM = 1
JOINT_STREAM = 2
KNOCKOFF_STREAM = 3
SAMPLE_STREAM = 4
SELECT_STREAM = 5


def comma_floats(text):
    return [float(part) for part in text.split(',') if part.strip()]


class KnockoffCommand(BaseCommand):
    """Options shared by every knockoffforge command"""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON run configuration')
        parser.add_argument('--seed', type=int, help='Random seed (overrides the config)')
        parser.add_argument('--out', help='Output directory (default: current directory)')

    def load_config(self, options, **extra):
        overrides = {'seed': options.get('seed'), 'out': options.get('out')}
        overrides.update(extra)
        run = load_run_config(options.get('config'), overrides)
        run.out.mkdir(parents=True, exist_ok=True)
        return run

    def stream(self, run, key):
        return seed_stream(run.train.seed, key)

    def training_splits(self, run):
        """Training and validation covariates: the --val CSV when given, else a seeded split"""
        if run.data is None:
            raise InvalidInput('no training data: pass --data or set "data" in the config')
        response = run.response or DEFAULT_RESPONSE
        matrix, _ = read_covariates(run.data, response=response)
        if run.val is not None:
            val, _ = read_covariates(run.val, response=response)
            if val.columns != matrix.columns:
                raise InvalidInput(f'validation columns {list(val.columns)} differ from training columns {list(matrix.columns)}')
            return matrix, val
        fraction = run.train.val_fraction
        train_rows, val_rows = split_rows(matrix.n_rows, self.stream(run, SPLIT_STREAM), (1.0 - fraction, fraction))
        logger.info('split %d rows into %d training and %d validation rows', matrix.n_rows, train_rows.size, val_rows.size)
        return matrix.take(np.sort(train_rows)), matrix.take(np.sort(val_rows))

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def warning(self, message):
        self.stdout.write(self.style.WARNING(message))


def output_path(run, name):
    return Path(run.out) / name
