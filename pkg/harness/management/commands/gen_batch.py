"""
gen-batch: roll out a policy in an MDP and write batch JSONL
"""
import io

from django.conf import settings

from harness.commands import ToolkitCommand, load_mdp, load_policy
from harness.generators import gen_batch
from mdp_core.tabular import TabularPolicy


class Command(ToolkitCommand):
    help = 'Generate episodic transitions from P0 under a policy (uniform by default)'

    def add_arguments(self, parser):
        parser.add_argument('--env', required=True, help='MDP JSON file')
        parser.add_argument('--policy', default=None, help='policy JSON file')
        parser.add_argument('--n', type=int, default=1000)
        parser.add_argument('--horizon', type=int, default=None)
        parser.add_argument('--src', type=int, default=1, help='1-based generating expert tag')

    def run(self, **options):
        mdp = load_mdp(options['env'])
        if options['policy']:
            policy = load_policy(options['policy'])
        else:
            policy = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
        horizon = options['horizon'] or settings.MOE_TOOLKIT['EPISODE_HORIZON']
        batch = gen_batch(mdp, policy, options['n'], horizon, seed=options['seed'],
                          src=options['src'])
        stream = io.StringIO()
        batch.to_jsonl(stream)
        self.emit(stream.getvalue(), options['out'])
