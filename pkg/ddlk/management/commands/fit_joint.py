from ddlk.autoregressive import fit_joint
from ddlk.datasets import Standardizer
from ddlk.decorators import command_errors
from ddlk.management.base import JOINT_STREAM, KnockoffCommand, output_path
from ddlk.persistence import save_model
from ddlk.utils import write_json

MODEL_FILE = 'joint_model.kfm'
HISTORY_FILE = 'joint_history.json'


class Command(KnockoffCommand):
    help = 'Stage 1: fit the covariate model q_joint(x) by maximum likelihood'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--data', help='Training CSV (headered, numeric)')
        parser.add_argument('--val', help='Validation CSV; split off the training data when omitted')
        parser.add_argument('--response', help='Response column to ignore if present (default: y)')

    @command_errors
    def handle(self, *args, **options):
        run = self.load_config(options, data=options['data'], val=options['val'], response=options['response'])
        train, val = self.training_splits(run)
        scaler = Standardizer.fit(train.values)

        model = fit_joint(
            scaler.transform(train.values), scaler.transform(val.values),
            run.train, self.stream(run, JOINT_STREAM), columns=train.columns,
        )

        model_path = save_model(output_path(run, MODEL_FILE), model, scaler)
        write_json(output_path(run, HISTORY_FILE), {
            'kind': 'joint',
            'config': run.train.to_dict(),
            'columns': list(model.columns),
            'history': model.history,
        })
        self.success(f'Fitted joint model on {train.n_rows} rows x {train.n_columns} features: {model_path}')
