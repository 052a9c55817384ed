"""
gen-env: write a synthetic MDP document
"""
from harness.commands import ToolkitCommand, dump_json
from harness.generators import gen_mood_chain, gen_random_mdp


class Command(ToolkitCommand):
    help = 'Generate a random Dirichlet MDP or a user mood chain as MDP JSON'

    def add_arguments(self, parser):
        parser.add_argument('--generator', choices=('random', 'mood_chain'), default='random')
        parser.add_argument('--n-states', type=int, default=4)
        parser.add_argument('--n-actions', type=int, default=3)
        parser.add_argument('--gamma', type=float, default=0.8)
        parser.add_argument('--reward-range', type=float, nargs=2, default=(0.0, 1.0))
        parser.add_argument('--n-levels', type=int, default=5)
        parser.add_argument('--slip', type=float, default=0.1)

    def run(self, **options):
        if options['generator'] == 'mood_chain':
            mdp = gen_mood_chain(options['n_levels'], options['slip'], options['gamma'])
        else:
            mdp = gen_random_mdp(options['seed'], options['n_states'], options['n_actions'],
                                 gamma=options['gamma'],
                                 reward_range=tuple(options['reward_range']))
        self.emit(dump_json(mdp.to_dict()), options['out'])
