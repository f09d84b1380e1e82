from fairrank.ingest import load_bundle
from fairrank.recommenders import FactorModel, export_scores, top_n_candidates

from ._common import FairRankCommand


class Command(FairRankCommand):
    help = 'Write the TopN candidate scores of a trained model'

    option_map = {'top_n': ('rerank', 'top_n'), 'k': ('rerank', 'k')}

    def add_command_arguments(self, parser):
        parser.add_argument('--bundle', type=str, required=True, help='Dataset bundle directory')
        parser.add_argument('--model-file', type=str, required=True, help='Model saved by the train command')
        parser.add_argument('--top-n', type=int, help='Candidates kept per user (default: every unseen item)')
        parser.add_argument('--k', type=int, help='Final list length; top-n must not be smaller')
        parser.add_argument('--out', type=str, required=True, help='Output scores TSV')

    def run(self, conf, options):
        dataset = load_bundle(options['bundle'])
        model = FactorModel.load(options['model_file'])
        scores = top_n_candidates(model, dataset, conf['rerank']['top_n'], conf['rerank']['k'])
        self.report_warnings(scores.warnings)
        path = export_scores(scores, dataset, options['out'])
        self.stdout.write(self.style.SUCCESS(f'Wrote candidates of {len(scores)} users to {path}'))
