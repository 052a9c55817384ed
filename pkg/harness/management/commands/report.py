"""
report: aggregate a metrics CSV across trial seeds
"""
import io

from harness.commands import ToolkitCommand
from harness.reporting import REPORT_KINDS, read_metrics, report, write_report


class Command(ToolkitCommand):
    help = 'Mean and std per metric and iteration (curve) or per metric at the end (summary)'

    def add_arguments(self, parser):
        parser.add_argument('--metrics', required=True, help='metrics CSV from run')
        parser.add_argument('--kind', choices=REPORT_KINDS, default='curve')

    def run(self, **options):
        with open(options['metrics'], newline='') as stream:
            rows = read_metrics(stream)
        stream = io.StringIO()
        write_report(report(rows, options['kind']), stream)
        self.emit(stream.getvalue(), options['out'])
