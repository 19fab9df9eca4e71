from dataclasses import replace

from ddlk.benchmarks import histogram_frames, run_experiment
from ddlk.decorators import command_errors
from ddlk.exceptions import InvalidInput, NumericalAbort
from ddlk.management.base import KnockoffCommand, output_path
from ddlk.utils import write_frame, write_json


class Command(KnockoffCommand):
    help = 'Run a synthetic benchmark: per-seed results, FDP/power curves and marginal histograms'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--stat', choices=['hrt', 'mixture'], help='Knockoff statistic')
        parser.add_argument('--lambda', dest='lam', type=float, help='Entropy regularization weight')

    @command_errors
    def handle(self, *args, **options):
        run = self.load_config(options, statistic=options['stat'], lam=options['lam'])
        if run.benchmark is None:
            raise InvalidInput('the config has no "benchmark" section')
        spec = run.benchmark
        method = replace(run.method, train=replace(run.train, lam=spec.lam))

        result = run_experiment(spec, method)

        for seed_result in result.seeds:
            write_json(output_path(run, f'seeds/seed_{seed_result.seed}.json'), seed_result.to_dict())
        write_json(output_path(run, 'experiment.json'), {
            'spec': spec.to_dict(),
            'method': method.to_dict(),
            'seeds': [seed_result.seed for seed_result in result.seeds],
            'failed': result.failed,
        })
        for seed, frames in histogram_frames(result, bins=run.bins).items():
            for name, frame in frames.items():
                write_frame(output_path(run, f'histograms/seed_{seed}/{name}.csv'), frame)

        for failure in result.failed:
            self.warning(f'Seed {failure["seed"]} failed: {failure["error"]}')
        if not result.seeds:
            raise NumericalAbort(f'all {len(spec.seeds)} benchmark seeds failed')

        curve = result.curve()
        path = write_frame(output_path(run, 'curves.csv'), curve)
        self.success(f'Benchmark {spec.kind}: {len(result.seeds)}/{len(spec.seeds)} seeds succeeded; curves in {path}')
