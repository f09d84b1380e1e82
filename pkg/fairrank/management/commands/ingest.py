from pathlib import Path

from fairrank.harness import ingest_config
from fairrank.ingest import DatasetImporter, save_bundle

from ._common import DATASET_OPTIONS, FairRankCommand, add_dataset_arguments


class Command(FairRankCommand):
    help = 'Parse raw dataset files, k-core filter, split and write a canonical bundle'

    option_map = DATASET_OPTIONS

    def add_command_arguments(self, parser):
        add_dataset_arguments(parser)
        parser.add_argument('--out', type=str, required=True, help='Output bundle directory')

    def run(self, conf, options):
        importer = DatasetImporter(ingest_config(conf['dataset']))
        self.stdout.write('Ingesting dataset...')
        dataset = importer.build()
        self.report_warnings(importer.results['warnings'])
        out = save_bundle(dataset, Path(options['out']))
        counts = dataset.manifest['counts']
        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote bundle to {out}: {counts['users']} users, {counts['items']} items, "
                f"{counts['interactions']} interactions ({counts['train']} train / {counts['test']} test), "
                f"{counts['categories']} categories."
            )
        )
