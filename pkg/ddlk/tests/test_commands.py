import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import decouple
import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from ddlk.datasets import knockoff_frame
from ddlk.decorators import INPUT_ERROR, NUMERICAL_ABORT
from ddlk.tests.helpers import ar_gaussian
from ddlk.utils import write_frame
from knockoffforge import settings as project_settings
from knockoffforge.cli import SUBCOMMANDS, main

TINY_TRAIN = {
    'n_components': 2, 'hidden_units': 8, 'max_epochs_joint': 2, 'max_epochs_knockoff': 2, 'batch_size': 64,
}


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)
        rng = np.random.default_rng(0)
        x = ar_gaussian(200, 3, 0.5, rng)
        frame = pd.DataFrame(x, columns=['x1', 'x2', 'x3'])
        frame['y'] = 2.0 * x[:, 0] + rng.standard_normal(200)
        self.frame = frame
        self.data = write_frame(self.tmp / 'data.csv', frame)
        self.config = self.write_json('config.json', {'train': TINY_TRAIN, 'response_model': 'ridge', 'seed': 3})

    def write_json(self, name, payload):
        path = self.tmp / name
        path.write_text(json.dumps(payload), encoding='utf-8')
        return path

    def call(self, name, **options):
        stdout = StringIO()
        call_command(name, stdout=stdout, **options)
        return stdout.getvalue()

    def fit_both(self, out):
        self.call('fit_joint', config=str(self.config), data=str(self.data), out=str(out))
        self.call('fit_knockoff', config=str(self.config), data=str(self.data), joint=str(out / 'joint_model.kfm'), out=str(out))
        return out / 'knockoff_model.kfm'


class FitCommandTests(CommandTestCase):

    def test_fit_joint_writes_model_and_history(self):
        out = self.tmp / 'run'
        message = self.call('fit_joint', config=str(self.config), data=str(self.data), out=str(out))
        self.assertIn('Fitted joint model', message)
        history = json.loads((out / 'joint_history.json').read_text())
        self.assertEqual(history['kind'], 'joint')
        self.assertEqual(history['columns'], ['x1', 'x2', 'x3'])
        self.assertEqual(history['config']['seed'], 3)
        self.assertTrue((out / 'joint_model.kfm').exists())

    def test_fit_joint_is_deterministic(self):
        for name in ('a', 'b'):
            self.call('fit_joint', config=str(self.config), data=str(self.data), out=str(self.tmp / name), seed=11)
        for file in ('joint_model.kfm', 'joint_history.json'):
            self.assertEqual((self.tmp / 'a' / file).read_bytes(), (self.tmp / 'b' / file).read_bytes())

    def test_non_numeric_cell_is_an_input_error(self):
        bad = self.frame.astype(object)
        bad.loc[2, 'x2'] = 'n/a'
        path = self.tmp / 'bad.csv'
        bad.to_csv(path, index=False)
        with self.assertRaises(CommandError) as caught:
            self.call('fit_joint', config=str(self.config), data=str(path), out=str(self.tmp / 'run'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)
        self.assertIn('row 3', str(caught.exception))
        self.assertIn("column 'x2'", str(caught.exception))

    def test_missing_data_and_models(self):
        with self.assertRaises(CommandError) as caught:
            self.call('fit_joint', config=str(self.config), out=str(self.tmp / 'run'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)
        with self.assertRaises(CommandError) as caught:
            self.call('fit_knockoff', config=str(self.config), data=str(self.data), joint=str(self.tmp / 'none.kfm'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)

    def test_fit_knockoff_records_the_adversary(self):
        out = self.tmp / 'run'
        self.fit_both(out)
        history = json.loads((out / 'knockoff_history.json').read_text())
        self.assertEqual(history['kind'], 'knockoff')
        self.assertEqual(history['history'][0]['epoch'], 0)
        self.assertEqual(len(history['swap_probabilities']), 3)

    def test_lambda_option_reaches_the_trainer(self):
        out = self.tmp / 'run'
        self.call('fit_joint', config=str(self.config), data=str(self.data), out=str(out))
        self.call(
            'fit_knockoff', config=str(self.config), data=str(self.data), joint=str(out / 'joint_model.kfm'),
            out=str(out), lam=0.7,
        )
        history = json.loads((out / 'knockoff_history.json').read_text())
        self.assertEqual(history['config']['lambda'], 0.7)

    def test_knockoff_model_is_not_a_joint_model(self):
        out = self.tmp / 'run'
        model = self.fit_both(out)
        with self.assertRaises(CommandError) as caught:
            self.call('fit_knockoff', config=str(self.config), data=str(self.data), joint=str(model), out=str(out))
        self.assertIn('expected joint', str(caught.exception))


class SampleCommandTests(CommandTestCase):

    def test_response_is_echoed_and_output_repeats(self):
        model = self.fit_both(self.tmp / 'run')
        for name in ('a', 'b'):
            self.call('sample', config=str(self.config), data=str(self.data), model=str(model), out=str(self.tmp / name))
        first = (self.tmp / 'a' / 'knockoffs.csv').read_bytes()
        self.assertEqual(first, (self.tmp / 'b' / 'knockoffs.csv').read_bytes())
        knockoffs = pd.read_csv(self.tmp / 'a' / 'knockoffs.csv')
        self.assertEqual(list(knockoffs.columns), ['x1_knockoff', 'x2_knockoff', 'x3_knockoff', 'y'])
        self.assertEqual(len(knockoffs), 200)
        np.testing.assert_allclose(knockoffs['y'], self.frame['y'], rtol=1e-15)

    def test_data_without_response(self):
        model = self.fit_both(self.tmp / 'run')
        covariates = write_frame(self.tmp / 'covariates.csv', self.frame.drop(columns='y'))
        self.call('sample', config=str(self.config), data=str(covariates), model=str(model), out=str(self.tmp / 'out'))
        knockoffs = pd.read_csv(self.tmp / 'out' / 'knockoffs.csv')
        self.assertEqual(list(knockoffs.columns), ['x1_knockoff', 'x2_knockoff', 'x3_knockoff'])

    def test_columns_must_match_the_model(self):
        model = self.fit_both(self.tmp / 'run')
        renamed = write_frame(self.tmp / 'renamed.csv', self.frame.rename(columns={'x3': 'z'}))
        with self.assertRaises(CommandError) as caught:
            self.call('sample', config=str(self.config), data=str(renamed), model=str(model), out=str(self.tmp / 'out'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)

    def test_truncated_model_file_is_an_input_error(self):
        model = self.fit_both(self.tmp / 'run')
        model.write_bytes(model.read_bytes()[:-3])
        with self.assertRaises(CommandError) as caught:
            self.call('sample', config=str(self.config), data=str(self.data), model=str(model), out=str(self.tmp / 'out'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)
        self.assertIn('truncated', str(caught.exception))


class SelectCommandTests(CommandTestCase):

    def test_identical_copies_select_nothing(self):
        knockoffs = write_frame(self.tmp / 'copies.csv', knockoff_frame(self.frame[['x1', 'x2', 'x3']].to_numpy(), ('x1', 'x2', 'x3')))
        self.call('select', config=str(self.config), data=str(self.data), knockoffs=str(knockoffs), out=str(self.tmp / 'out'))
        report = json.loads((self.tmp / 'out' / 'selection.json').read_text())
        self.assertEqual(report['w'], [0.0, 0.0, 0.0])
        self.assertEqual(len(report['selections']), 10)
        self.assertTrue(all(s['threshold'] is None and s['selected'] == [] for s in report['selections']))

    def test_pipeline_selection(self):
        model = self.fit_both(self.tmp / 'run')
        self.call('sample', config=str(self.config), data=str(self.data), model=str(model), out=str(self.tmp / 'run'))
        out = self.tmp / 'selected'
        message = self.call(
            'select', config=str(self.config), data=str(self.data), knockoffs=str(self.tmp / 'run' / 'knockoffs.csv'),
            out=str(out), levels=[0.1, 0.3], stat='mixture',
        )
        self.assertIn('p=0.10', message)
        report = json.loads((out / 'selection.json').read_text())
        self.assertEqual(report['statistic'], 'mixture')
        self.assertEqual([s['level'] for s in report['selections']], [0.1, 0.3])
        self.assertEqual(report['columns'], ['x1', 'x2', 'x3'])
        self.assertGreater(report['w'][0], 0.0)

    def test_row_counts_must_agree(self):
        knockoffs = write_frame(self.tmp / 'short.csv', knockoff_frame(np.zeros((5, 3)), ('x1', 'x2', 'x3')))
        with self.assertRaises(CommandError) as caught:
            self.call('select', config=str(self.config), data=str(self.data), knockoffs=str(knockoffs), out=str(self.tmp / 'out'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)


class BenchmarkCommandTests(CommandTestCase):

    def benchmark_config(self, **benchmark):
        spec = {'kind': 'gaussian', 'n_samples': 300, 'd': 4, 'm': 2, 'seeds': [0, 1]}
        spec.update(benchmark)
        return self.write_json('benchmark.json', {
            'benchmark': spec, 'knockoffs': 'oracle', 'response_model': 'ridge', 'levels': [0.1, 0.2, 0.3], 'bins': 5,
        })

    def test_oracle_benchmark_outputs(self):
        out = self.tmp / 'bench'
        self.call('benchmark', config=str(self.benchmark_config()), out=str(out))
        curve = pd.read_csv(out / 'curves.csv')
        self.assertEqual(list(curve.columns), ['p', 'mean_fdp', 'se_fdp', 'mean_power', 'se_power'])
        self.assertEqual(len(curve), 3)
        experiment = json.loads((out / 'experiment.json').read_text())
        self.assertEqual(experiment['seeds'], [0, 1])
        self.assertEqual(experiment['failed'], [])
        seed = json.loads((out / 'seeds' / 'seed_1.json').read_text())
        self.assertEqual(len(seed['records']), 3)
        histogram = pd.read_csv(out / 'histograms' / 'seed_0' / 'x4.csv')
        self.assertEqual(len(histogram), 5)

    def test_benchmark_is_deterministic(self):
        config = self.benchmark_config()
        for name in ('a', 'b'):
            self.call('benchmark', config=str(config), out=str(self.tmp / name))
        for file in ('curves.csv', 'experiment.json', 'seeds/seed_0.json'):
            self.assertEqual((self.tmp / 'a' / file).read_bytes(), (self.tmp / 'b' / file).read_bytes())

    def test_all_seeds_failing_is_a_numerical_abort(self):
        config = self.benchmark_config(kind='mixture', d=3, m=1)
        with self.assertRaises(CommandError) as caught:
            self.call('benchmark', config=str(config), out=str(self.tmp / 'bench'))
        self.assertEqual(caught.exception.returncode, NUMERICAL_ABORT)

    def test_needs_a_benchmark_section(self):
        with self.assertRaises(CommandError) as caught:
            self.call('benchmark', config=str(self.config), out=str(self.tmp / 'bench'))
        self.assertEqual(caught.exception.returncode, INPUT_ERROR)


class CliTests(SimpleTestCase):

    def test_hyphenated_subcommands_map_to_management_commands(self):
        with mock.patch('django.core.management.execute_from_command_line') as execute:
            main(['fit-joint', '--seed', '1'])
        execute.assert_called_once_with(['knockoffforge', 'fit_joint', '--seed', '1'])
        self.assertEqual(set(SUBCOMMANDS.values()), {'fit_joint', 'fit_knockoff', 'sample', 'select', 'benchmark'})

    def test_settings_come_from_decouple(self):
        self.assertIs(project_settings.config, decouple.config)
        self.assertIsInstance(settings.KNOCKOFF_FORGE_THREADS, int)
        self.assertIsInstance(settings.KNOCKOFF_FORGE_SLOW_TESTS, bool)
