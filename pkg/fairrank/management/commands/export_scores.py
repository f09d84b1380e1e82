from fairrank.ingest import load_bundle
from fairrank.recommenders import FactorModel, export_dense_scores, export_scores, top_n_candidates

from ._common import FairRankCommand


class Command(FairRankCommand):
    help = 'Export model scores as a sparse TSV or a JSON-headed dense binary matrix'

    def add_command_arguments(self, parser):
        parser.add_argument('--bundle', type=str, required=True, help='Dataset bundle directory')
        parser.add_argument('--model-file', type=str, required=True, help='Model saved by the train command')
        parser.add_argument('--out', type=str, required=True,
                            help='Output path (TSV, or the .json header of a dense export)')
        parser.add_argument('--dense', action='store_true', help='Write the full user x item matrix')

    def run(self, conf, options):
        dataset = load_bundle(options['bundle'])
        model = FactorModel.load(options['model_file'])
        if options['dense']:
            path = export_dense_scores(model, dataset, options['out'])
        else:
            scores = top_n_candidates(model, dataset)
            self.report_warnings(scores.warnings)
            path = export_scores(scores, dataset, options['out'])
        self.stdout.write(self.style.SUCCESS(f'Exported scores to {path}'))
