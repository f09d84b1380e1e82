import logging

from django.core.management.base import BaseCommand, CommandError

from fairrank.exceptions import FairRankError
from fairrank.harness import load_config_file, merge_config, settings_defaults

logger = logging.getLogger('fairrank')

# option dest -> (config section, key)
DATASET_OPTIONS = {
    'format': ('dataset', 'format'),
    'data_dir': ('dataset', 'dir'),
    'interactions': ('dataset', 'interactions'),
    'users': ('dataset', 'users'),
    'items': ('dataset', 'items'),
    'k_core': ('dataset', 'k_core'),
    'split': ('dataset', 'split'),
    'train_fraction': ('dataset', 'train_fraction'),
    'keep_unknown_genre': ('dataset', 'keep_unknown_genre'),
    'age_edges': ('dataset', 'age_edges'),
    'min_rating': ('dataset', 'min_rating'),
}

MODEL_OPTIONS = {
    'model': ('model', 'name'),
    'factors': ('model', 'factors'),
    'epochs': ('model', 'epochs'),
    'als_sweeps': ('model', 'als_sweeps'),
    'learning_rate': ('model', 'learning_rate'),
    'regularization': ('model', 'regularization'),
    'confidence': ('model', 'confidence'),
}

RERANK_OPTIONS = {
    'beta': ('rerank', 'beta'),
    'gamma': ('rerank', 'gamma'),
    'alpha': ('rerank', 'alpha'),
    'k': ('rerank', 'k'),
    'top_n': ('rerank', 'top_n'),
    'normalization': ('rerank', 'normalization'),
    'timestamp_mode': ('rerank', 'timestamp_mode'),
}


def float_list(text):
    return [float(v) for v in text.split(',') if v.strip()]


def int_list(text):
    return [int(v) for v in text.split(',') if v.strip()]


def add_dataset_arguments(parser):
    parser.add_argument('--format', type=str, help='movielens-100k, movielens-1m or generic-tsv')
    parser.add_argument('--data-dir', type=str, help='Directory holding the raw files')
    parser.add_argument('--interactions', type=str, help='Interactions file (overrides --data-dir)')
    parser.add_argument('--users', type=str, help='User attributes file')
    parser.add_argument('--items', type=str, help='Item categories file')
    parser.add_argument('--k-core', type=int, help='k-core threshold (0 disables)')
    parser.add_argument('--split', type=str, help='temporal-per-user or temporal-global')
    parser.add_argument('--train-fraction', type=float, help='Share of interactions used for training')
    parser.add_argument('--keep-unknown-genre', action='store_true', default=None,
                        help='Keep the MovieLens "unknown" genre as a category')
    parser.add_argument('--age-edges', type=int_list, help='Comma separated age bucket edges')
    parser.add_argument('--min-rating', type=float, help='Drop interactions rated below this value')


def add_model_arguments(parser):
    parser.add_argument('--model', type=str, help='biased-mf or wmf')
    parser.add_argument('--factors', type=int, help='Latent dimension d')
    parser.add_argument('--epochs', type=int, help='SGD epochs (biased-mf)')
    parser.add_argument('--als-sweeps', type=int, help='ALS sweeps (wmf)')
    parser.add_argument('--learning-rate', type=float, help='SGD learning rate (biased-mf)')
    parser.add_argument('--regularization', type=float, help='L2 regularization')
    parser.add_argument('--confidence', type=float, help='Confidence scale (wmf)')


def add_rerank_arguments(parser):
    parser.add_argument('--beta', type=float, help='Relevance/fairness trade-off in [0, 1]')
    parser.add_argument('--gamma', type=float, help='Rank discount exponent in [0, 1]')
    parser.add_argument('--alpha', type=float, help='Smoothing weight in (0, 1)')
    parser.add_argument('--k', type=int, help='Length of the final lists')
    parser.add_argument('--top-n', type=int, help='Candidate pool size per user')
    parser.add_argument('--normalization', type=str, help='minmax, global or none')
    parser.add_argument('--timestamp-mode', type=str, help='raw or minmax-recency')
    parser.add_argument('--attribute', action='append', dest='attributes',
                        help='Sensitive attribute to evaluate (repeatable)')


class FairRankCommand(BaseCommand):
    """Base for toolkit commands: config layering and stage-tagged errors.

    Defaults come from ``settings.FAIRRANK``, then ``--config``, then flags.
    Subclasses implement :meth:`run` and list the options they map into the
    configuration in ``option_map``.
    """

    option_map = {}

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, help='JSON or TOML configuration file')
        parser.add_argument('--seed', type=int, help='Random seed')
        parser.add_argument('--threads', type=int, help='Worker threads')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def resolve(self, options) -> dict:
        file_data = load_config_file(options['config']) if options.get('config') else {}
        flags = {'seed': options.get('seed'), 'threads': options.get('threads'),
                 'attributes': options.get('attributes')}
        for dest, (section, key) in self.option_map.items():
            value = options.get(dest)
            if value is not None:
                flags.setdefault(section, {})[key] = value
        return merge_config(settings_defaults(), file_data, flags)

    def handle(self, *args, **options):
        try:
            self.run(self.resolve(options), options)
        except FairRankError as e:
            stage = e.stage or 'error'
            logger.error(f'[{stage}] {e}')
            raise CommandError(f'[{stage}] {e}') from e

    def run(self, conf: dict, options: dict):
        raise NotImplementedError

    def report_warnings(self, warnings):
        for warning in warnings:
            self.stdout.write(self.style.WARNING(warning))
