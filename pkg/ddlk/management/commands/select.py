import numpy as np

from ddlk.datasets import read_dataset, read_knockoffs, split_rows
from ddlk.decorators import command_errors
from ddlk.diagnostics import null_sign_balance
from ddlk.exceptions import InvalidInput
from ddlk.forms import SelectionReportForm
from ddlk.knockoff_filter import ResponseModelSpec, compute_statistics, select_over_levels
from ddlk.management.base import DEFAULT_RESPONSE, SELECT_STREAM, KnockoffCommand, comma_floats, output_path
from ddlk.utils import jsonable, write_json

REPORT_FILE = 'selection.json'

# Response-model training rows versus held-out scoring rows
SELECT_SPLIT = (0.7, 0.3)


class Command(KnockoffCommand):
    help = 'Compute knockoff statistics and select features at each nominal FDR level'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--data', help='CSV with covariates and the response')
        parser.add_argument('--knockoffs', required=True, help='Knockoff CSV written by sample')
        parser.add_argument('--response', help='Response column (default: y)')
        parser.add_argument('--stat', choices=['hrt', 'mixture'], help='Knockoff statistic')
        parser.add_argument('--levels', type=comma_floats, help='Comma-separated nominal FDR levels')

    @command_errors
    def handle(self, *args, **options):
        run = self.load_config(
            options, data=options['data'], response=options['response'],
            statistic=options['stat'], levels=options['levels'],
        )
        if run.data is None:
            raise InvalidInput('no input data: pass --data or set "data" in the config')
        response = run.response or DEFAULT_RESPONSE
        dataset = read_dataset(run.data, response)
        knockoffs = read_knockoffs(options['knockoffs'], dataset.columns)
        if knockoffs.n_rows != dataset.n_rows:
            raise InvalidInput(f'knockoffs have {knockoffs.n_rows} rows, data has {dataset.n_rows}')

        rng = self.stream(run, SELECT_STREAM)
        train_rows, test_rows = (np.sort(rows) for rows in split_rows(dataset.n_rows, rng, SELECT_SPLIT))
        model_spec = ResponseModelSpec(run.method.response_model, seed=run.train.seed)
        stats = compute_statistics(
            run.method.statistic,
            dataset.take(train_rows), knockoffs.values[train_rows],
            dataset.take(test_rows), knockoffs.values[test_rows],
            model_spec,
        )

        selections = select_over_levels(stats, run.method.levels)
        report = jsonable({
            'statistic': run.method.statistic,
            'response': response,
            'columns': list(dataset.columns),
            'w': stats.w,
            'selections': [
                {'level': s.nominal_level, 'threshold': s.threshold, 'selected': [dataset.columns[j] for j in s.selected]}
                for s in selections
            ],
            'null_sign_balance': null_sign_balance(stats).to_dict(),
        })
        form = SelectionReportForm(data=report)
        if not form.is_valid():
            raise InvalidInput(f'selection report failed validation: {form.errors.as_text()}')

        path = write_json(output_path(run, REPORT_FILE), report)
        for selection in selections:
            self.stdout.write(f'p={selection.nominal_level:.2f}: {len(selection.selected)} selected')
        balance = report['null_sign_balance']
        if balance['p_value'] < 0.05:
            self.warning(
                f'Statistic signs are unbalanced (p={balance["p_value"]:.3g}); '
                'consider the mixture statistic if many features are null'
            )
        self.success(f'Wrote selection report: {path}')
