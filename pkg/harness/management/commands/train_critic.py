"""
train-critic: hybrid TD learning from batch data
"""
import numpy as np

from critic_hybrid.critics import HybridCriticConfig, hybrid_td_step, weighted_advantage
from harness.commands import ToolkitCommand, dump_json, load_batch, load_mdp, load_policy
from mdp_core.tabular import TabularPolicy


class Command(ToolkitCommand):
    help = 'Train the hybrid critic Q table and its weighted advantage on a batch'

    def add_arguments(self, parser):
        parser.add_argument('--mu', type=float, required=True, help='mixing weight in [0, 1]')
        parser.add_argument('--batch', required=True, help='batch JSONL file')
        parser.add_argument('--env', required=True, help='MDP JSON file (shape and gamma)')
        parser.add_argument('--behavior', default=None, help='behavior policy JSON (uniform by default)')
        parser.add_argument('--lr', type=float, default=0.1)
        parser.add_argument('--tau', type=float, default=0.05)
        parser.add_argument('--epochs', type=int, default=100)
        parser.add_argument('--batch-size', type=int, default=32)
        parser.add_argument('--inner-steps', type=int, default=1)

    def run(self, **options):
        mdp = load_mdp(options['env'])
        batch = load_batch(options['batch'], mdp)
        if options['behavior']:
            behavior = load_policy(options['behavior'])
        else:
            behavior = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
        cfg = HybridCriticConfig(mu_mix=options['mu'], behavior=behavior, lr=options['lr'],
                                 tau=options['tau'])
        rng = np.random.default_rng(options['seed'])
        q = np.zeros((mdp.n_states, mdp.n_actions))
        q_target = q.copy()
        size = options['batch_size']
        for _ in range(options['epochs']):
            order = rng.permutation(len(batch))
            for start in range(0, len(order), size):
                minibatch = batch.subset(order[start:start + size])
                hybrid_td_step(q, q_target, minibatch, mdp.gamma, cfg.mu_mix, behavior, cfg.lr,
                               inner_steps=options['inner_steps'])
                q_target = cfg.tau * q + (1.0 - cfg.tau) * q_target
        result = weighted_advantage(q, behavior, cfg.mu_mix)
        document = {'mu': cfg.mu_mix, 'q': q.tolist(), 'v': result.v.tolist(),
                    'w': result.w.tolist()}
        self.emit(dump_json(document), options['out'])
