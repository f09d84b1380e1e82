from pathlib import Path

from fairrank.fairness import baseline_lists, profile_for, rerank_all, write_rankings
from fairrank.harness import rerank_config, resolve_attributes
from fairrank.ingest import load_bundle
from fairrank.recommenders import load_external_scores

from ._common import RERANK_OPTIONS, FairRankCommand, add_rerank_arguments


class Command(FairRankCommand):
    help = 'Build counterfactual profiles and greedily re-rank candidate lists per attribute'

    option_map = RERANK_OPTIONS

    def add_command_arguments(self, parser):
        parser.add_argument('--bundle', type=str, required=True, help='Dataset bundle directory')
        parser.add_argument('--scores', type=str, required=True,
                            help='Candidate scores (TSV, or the .json header of a dense export)')
        add_rerank_arguments(parser)
        parser.add_argument('--out', type=str, required=True, help='Output directory')

    def run(self, conf, options):
        dataset = load_bundle(options['bundle'])
        config = rerank_config(conf['rerank'])
        scores = load_external_scores(options['scores'], dataset, config.n)
        self.report_warnings(scores.warnings)
        out = Path(options['out'])
        write_rankings(baseline_lists(scores, config.k), scores, dataset, out / 'original.tsv')
        for attribute in resolve_attributes(dataset, conf['attributes'] or ()):
            profile = profile_for(dataset, attribute, config)
            profile.save(out / f'profile_{attribute}.json')
            lists = rerank_all(scores, profile, dataset.catalog, config, threads=conf['threads'])
            path = write_rankings(lists, scores, dataset, out / f'reranked_{attribute}.tsv')
            self.stdout.write(self.style.SUCCESS(f'Re-ranked {len(lists)} users for {attribute} -> {path}'))
