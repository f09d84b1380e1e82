import json
from pathlib import Path

from fairrank.fairness import read_rankings
from fairrank.harness import resolve_attributes
from fairrank.ingest import load_bundle
from fairrank.metrics import accuracy_report, bias_report

from ._common import FairRankCommand


class Command(FairRankCommand):
    help = 'Compute CC/CDCG bias and NDCG/HitRatio for ranking files'

    option_map = {'k': ('rerank', 'k')}

    def add_command_arguments(self, parser):
        parser.add_argument('--bundle', type=str, required=True, help='Dataset bundle directory')
        parser.add_argument('--rankings', action='append', required=True,
                            help='Ranking TSV written by the rerank command (repeatable)')
        parser.add_argument('--attribute', action='append', dest='attributes',
                            help='Sensitive attribute to evaluate (repeatable)')
        parser.add_argument('--k', type=int, help='Cut-off for the accuracy metrics')
        parser.add_argument('--out', type=str, required=True, help='Output directory')

    def run(self, conf, options):
        dataset = load_bundle(options['bundle'])
        k = conf['rerank']['k']
        attributes = resolve_attributes(dataset, conf['attributes'] or ())
        bias, accuracy = {}, {}
        for path in options['rankings']:
            name = Path(path).stem
            lists = read_rankings(path, dataset)
            bias[name] = {a: bias_report(a, lists, dataset.attributes, dataset.catalog).to_json()
                          for a in attributes}
            report = accuracy_report(lists, dataset.test_items, k)
            accuracy[name] = report.to_json(dataset.users.originals)
            self.stdout.write(f'{name}: NDCG@{k}={report.ndcg:.4f}, HitRatio@{k}={report.hit_ratio:.4f}')
            for attribute in attributes:
                totals = bias[name][attribute]
                self.stdout.write(f"  {attribute}: CC-bias={totals['CC']['total']:.4f}, "
                                  f"CDCG-bias={totals['CDCG']['total']:.4f}")
        out = Path(options['out'])
        out.mkdir(parents=True, exist_ok=True)
        for filename, data in (('bias_report.json', bias), ('accuracy_report.json', accuracy)):
            with open(out / filename, 'w', encoding='utf-8') as handle:
                json.dump(data, handle, indent=2)
                handle.write('\n')
        self.stdout.write(self.style.SUCCESS(f'Wrote reports to {out}'))
