from ddlk.autoregressive import sample_knockoffs
from ddlk.datasets import knockoff_frame, read_covariates
from ddlk.decorators import command_errors
from ddlk.exceptions import InvalidInput
from ddlk.management.base import DEFAULT_RESPONSE, SAMPLE_STREAM, KnockoffCommand, output_path
from ddlk.persistence import load_model
from ddlk.utils import write_frame

KNOCKOFFS_FILE = 'knockoffs.csv'


class Command(KnockoffCommand):
    help = 'Sample knockoffs for every row of a CSV from a fitted knockoff model'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--model', required=True, help='Knockoff model file written by fit-knockoff')
        parser.add_argument('--data', help='CSV of covariates to sample knockoffs for')
        parser.add_argument('--response', help='Response column, echoed untouched and never read (default: y)')

    @command_errors
    def handle(self, *args, **options):
        run = self.load_config(options, data=options['data'], response=options['response'])
        if run.data is None:
            raise InvalidInput('no input data: pass --data or set "data" in the config')
        stored = load_model(options['model'], expected_kind='knockoff')
        matrix, response_column = read_covariates(run.data, response=run.response or DEFAULT_RESPONSE)
        if matrix.columns != stored.model.columns:
            raise InvalidInput(
                f'data has columns {list(matrix.columns)}, the model expects {list(stored.model.columns)}'
            )

        scaler = stored.standardizer
        xt, _ = sample_knockoffs(stored.model, scaler.transform(matrix.values), self.stream(run, SAMPLE_STREAM))
        frame = knockoff_frame(scaler.inverse_transform(xt), matrix.columns, response_column)

        path = write_frame(output_path(run, KNOCKOFFS_FILE), frame)
        self.success(f'Sampled knockoffs for {matrix.n_rows} rows: {path}')
