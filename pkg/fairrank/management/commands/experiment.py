from fairrank.harness import ExperimentConfig, emit_report, run_experiment

from ._common import (DATASET_OPTIONS, MODEL_OPTIONS, RERANK_OPTIONS, FairRankCommand,
                      add_dataset_arguments, add_model_arguments, add_rerank_arguments)


class Command(FairRankCommand):
    help = 'Run ingest, training, re-ranking and evaluation end to end, then write report.md'

    option_map = {
        **DATASET_OPTIONS, **MODEL_OPTIONS, **RERANK_OPTIONS,
        'bundle': ('dataset', 'bundle'),
        'scores': ('model', 'scores'),
        'grid_search': ('model', 'grid_search'),
    }

    def add_command_arguments(self, parser):
        add_dataset_arguments(parser)
        parser.add_argument('--bundle', type=str, help='Use an existing dataset bundle instead of raw files')
        add_model_arguments(parser)
        parser.add_argument('--scores', type=str, help='External score file instead of a native model')
        parser.add_argument('--grid-search', action='store_true', default=None,
                            help='Select factors/regularization by HitRatio@k')
        add_rerank_arguments(parser)
        parser.add_argument('--out', type=str, help='Run directory')

    def resolve(self, options):
        conf = super().resolve(options)
        if options.get('out'):
            conf['out'] = options['out']
        return conf

    def run(self, conf, options):
        config = ExperimentConfig.from_mapping(conf)
        self.stdout.write(f'Running experiment into {config.out_dir}...')
        run_dir = run_experiment(config)
        report = emit_report(run_dir)
        self.stdout.write(self.style.SUCCESS(f'Experiment complete: {report}'))
