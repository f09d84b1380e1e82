from pathlib import Path

from fairrank.harness import train_config
from fairrank.ingest import load_bundle
from fairrank.recommenders import train_model

from ._common import MODEL_OPTIONS, FairRankCommand, add_model_arguments


class Command(FairRankCommand):
    help = 'Train a Biased MF or WMF baseline on a dataset bundle'

    option_map = MODEL_OPTIONS

    def add_command_arguments(self, parser):
        parser.add_argument('--bundle', type=str, required=True, help='Dataset bundle directory')
        add_model_arguments(parser)
        parser.add_argument('--out', type=str, help='Model file (default: <bundle>/model.npz)')

    def run(self, conf, options):
        dataset = load_bundle(options['bundle'])
        config = train_config(conf['model'], conf['seed'])
        kind = conf['model']['name']
        self.stdout.write(f'Training {kind} (d={config.factors}, lambda={config.regularization})...')
        model = train_model(kind, dataset, config, threads=conf['threads'])
        out = model.save(options['out'] or Path(options['bundle']) / 'model.npz')
        self.stdout.write(
            self.style.SUCCESS(f'Saved {kind} model to {out}; final loss {model.loss_history[-1]:.6f}')
        )
