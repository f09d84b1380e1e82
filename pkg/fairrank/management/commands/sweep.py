from fairrank.harness import PARAMETERS, ExperimentConfig, sweep

from ._common import (DATASET_OPTIONS, MODEL_OPTIONS, RERANK_OPTIONS, FairRankCommand,
                      add_dataset_arguments, add_model_arguments, add_rerank_arguments, float_list)


class Command(FairRankCommand):
    help = 'Sweep beta and/or gamma and write a long-format sweep.csv'

    option_map = {
        **DATASET_OPTIONS, **MODEL_OPTIONS, **RERANK_OPTIONS,
        'bundle': ('dataset', 'bundle'),
        'scores': ('model', 'scores'),
        'beta_grid': ('sweep', 'beta_grid'),
        'gamma_grid': ('sweep', 'gamma_grid'),
    }

    def add_command_arguments(self, parser):
        parser.add_argument('--parameter', choices=PARAMETERS, default='beta', help='Swept parameter')
        parser.add_argument('--grid', type=float_list, help='Comma separated values of the swept parameter')
        parser.add_argument('--beta-grid', type=float_list, help='Comma separated beta values')
        parser.add_argument('--gamma-grid', type=float_list, help='Comma separated gamma values')
        parser.add_argument('--cross', action='store_true', help='Run the full beta x gamma grid')
        add_dataset_arguments(parser)
        parser.add_argument('--bundle', type=str, help='Use an existing dataset bundle instead of raw files')
        add_model_arguments(parser)
        parser.add_argument('--scores', type=str, help='External score file instead of a native model')
        add_rerank_arguments(parser)
        parser.add_argument('--out', type=str, help='Sweep directory')

    def resolve(self, options):
        conf = super().resolve(options)
        if options.get('grid'):
            conf['sweep'][f"{options['parameter']}_grid"] = options['grid']
        if options.get('out'):
            conf['out'] = options['out']
        return conf

    def run(self, conf, options):
        config = ExperimentConfig.from_mapping(conf)
        self.stdout.write(f"Sweeping {options['parameter']} into {config.out_dir}...")
        path = sweep(config, options['parameter'], cross=options['cross'])
        self.stdout.write(self.style.SUCCESS(f'Sweep complete: {path}'))
