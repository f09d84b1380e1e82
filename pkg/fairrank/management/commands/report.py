from fairrank.harness import emit_report

from ._common import FairRankCommand


class Command(FairRankCommand):
    help = 'Write report.md and report.csv for a completed run directory'

    def add_command_arguments(self, parser):
        parser.add_argument('run_dir', type=str, help='Run directory written by the experiment command')

    def run(self, conf, options):
        path = emit_report(options['run_dir'])
        self.stdout.write(self.style.SUCCESS(f'Report written to {path}'))
