from ddlk.decorators import command_errors
from ddlk.exceptions import InvalidInput
from ddlk.management.base import KNOCKOFF_STREAM, KnockoffCommand, output_path
from ddlk.persistence import load_model, save_model
from ddlk.swap import swap_probabilities
from ddlk.trainer import fit_knockoff
from ddlk.utils import write_json

MODEL_FILE = 'knockoff_model.kfm'
HISTORY_FILE = 'knockoff_history.json'


class Command(KnockoffCommand):
    help = 'Stage 2: fit the knockoff model and swap adversary against a fitted joint model'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--joint', required=True, help='Joint model file written by fit-joint')
        parser.add_argument('--data', help='Training CSV (headered, numeric)')
        parser.add_argument('--val', help='Validation CSV; split off the training data when omitted')
        parser.add_argument('--response', help='Response column to ignore if present (default: y)')
        parser.add_argument('--lambda', dest='lam', type=float, help='Entropy regularization weight')

    @command_errors
    def handle(self, *args, **options):
        run = self.load_config(
            options, data=options['data'], val=options['val'], response=options['response'], lam=options['lam'],
        )
        joint = load_model(options['joint'], expected_kind='joint')
        train, val = self.training_splits(run)
        if train.columns != joint.model.columns:
            raise InvalidInput(
                f'data has columns {list(train.columns)}, the joint model was fit on {list(joint.model.columns)}'
            )

        scaler = joint.standardizer
        phi, sampler, history = fit_knockoff(
            joint.model, scaler.transform(train.values), scaler.transform(val.values),
            run.train, self.stream(run, KNOCKOFF_STREAM),
        )

        model_path = save_model(output_path(run, MODEL_FILE), phi, scaler, sampler)
        write_json(output_path(run, HISTORY_FILE), {
            'kind': 'knockoff',
            'config': run.train.to_dict(),
            'columns': list(phi.columns),
            'history': [report.to_dict() for report in history],
            'swap_probabilities': swap_probabilities(sampler),
        })
        best = min(report.validation for report in history)
        self.success(f'Fitted knockoff model over {len(history) - 1} epochs (best validation objective {best:.5f}): {model_path}')
