"""
train-manager: DQN, CQL or MBRL manager over expert candidates
"""
import csv
import io

from django.conf import settings

from harness.commands import ToolkitCommand, load_batch, load_mdp, load_policy, read_json, validated
from harness.experiments import train_manager
from manager_rl.moe_env import ManagerBatch
from mdp_core.serializers import TabularPolicySerializer

CURVE_FIELDS = ('iter', 'return_estimate', 'bellman_residual', 'cql_gap')


class Command(ToolkitCommand):
    help = 'Train a dialogue manager and write its learning curve as CSV'

    def add_arguments(self, parser):
        parser.add_argument('--method', choices=('dqn', 'cql', 'mbrl'), required=True)
        parser.add_argument('--env', required=True, help='MDP JSON file')
        parser.add_argument('--experts', required=True,
                            help='JSON list of policy files or policy documents, expert 0 first')
        parser.add_argument('--batch', default=None,
                            help='manager JSONL for cql, base batch JSONL for mbrl')
        parser.add_argument('--episodes', type=int, default=500)
        parser.add_argument('--steps', type=int, default=1000)
        parser.add_argument('--sweeps', type=int, default=200)
        parser.add_argument('--alpha', type=float, default=1.0)
        parser.add_argument('--lr', type=float, default=0.1)
        parser.add_argument('--tau', type=float, default=0.05)
        parser.add_argument('--batch-size', type=int, default=32)
        parser.add_argument('--n-transitions', type=int, default=500)
        parser.add_argument('--rollout-budget', type=int, default=2000)
        parser.add_argument('--log-every', type=int, default=None)

    def run(self, **options):
        mdp = load_mdp(options['env'])
        experts = [load_policy(entry) if isinstance(entry, str)
                   else validated(TabularPolicySerializer, entry, 'experts').to_policy()
                   for entry in read_json(options['experts'])]
        params = {
            'horizon': settings.MOE_TOOLKIT['EPISODE_HORIZON'],
            'episodes': options['episodes'],
            'steps': options['steps'],
            'sweeps': options['sweeps'],
            'alpha': options['alpha'],
            'lr': options['lr'],
            'tau': options['tau'],
            'batch_size': options['batch_size'],
            'n_transitions': options['n_transitions'],
            'rollout_budget': options['rollout_budget'],
        }
        base_batch = manager_batch = None
        if options['batch'] and options['method'] == 'cql':
            with open(options['batch']) as stream:
                manager_batch = ManagerBatch.from_jsonl(stream)
        elif options['batch'] and options['method'] == 'mbrl':
            base_batch = load_batch(options['batch'], mdp)
        _, curve = train_manager(options['method'], mdp, experts, options['seed'], params,
                                 base_batch=base_batch, manager_batch=manager_batch,
                                 log_every=options['log_every'])
        stream = io.StringIO()
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(CURVE_FIELDS)
        for point in curve:
            writer.writerow([point[field] for field in CURVE_FIELDS])
        self.emit(stream.getvalue(), options['out'])
