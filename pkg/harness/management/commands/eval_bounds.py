"""
eval-bounds: every lower bound and the true difference for one instance
"""
import io
from pathlib import Path

from cpi_bounds.surrogates import evaluate_bounds
from diff_value.identities import difference_report
from harness.commands import ToolkitCommand, dump_json, load_ensemble, load_mdp, read_json, validated
from harness.generators import random_feasible_weights
from harness.reporting import write_bounds
from moe_policy.serializers import MixtureWeightsSerializer


class Command(ToolkitCommand):
    help = 'Evaluate CPI, alpha-combined, TRPO and Pinsker bounds against the true return gap'

    def add_arguments(self, parser):
        parser.add_argument('--env', required=True, help='MDP JSON file')
        parser.add_argument('--ensemble', required=True, help='ensemble JSON file')
        parser.add_argument('--weights', default=None,
                            help='mixture weights JSON (random feasible from --seed when omitted)')
        parser.add_argument('--alpha', type=float, nargs='+', default=None)
        parser.add_argument('--instance-id', dest='instance_id', default=None,
                            help='CSV instance_id (env file stem, plus the seed for random weights)')
        parser.add_argument('--difference', default=None,
                            help='also write the per-state difference identities as JSON here')

    def run(self, **options):
        mdp = load_mdp(options['env'])
        ensemble = load_ensemble(options['ensemble'])
        instance_id = options['instance_id'] or Path(options['env']).stem
        if options['weights']:
            lam = validated(MixtureWeightsSerializer, read_json(options['weights']),
                            options['weights']).to_weights()
        else:
            lam = random_feasible_weights(ensemble, options['seed'])
            if not options['instance_id']:
                instance_id = f"{instance_id}-{options['seed']}"
        reports = evaluate_bounds(mdp, ensemble, lam, alpha=options['alpha'])
        stream = io.StringIO()
        write_bounds(instance_id, reports, stream)
        self.emit(stream.getvalue(), options['out'])
        if options['difference']:
            difference = difference_report(mdp, ensemble, lam)
            self.emit(dump_json({'instance_id': instance_id, **difference.to_dict()}),
                      options['difference'])
