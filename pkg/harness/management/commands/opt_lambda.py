"""
opt-lambda: maximize the sample-average bound over mixture weights
"""
import numpy as np

from harness.commands import ToolkitCommand, dump_json, load_batch, load_ensemble, load_mdp
from harness.experiments import solve_from_batches
from mdp_core.exceptions import ConstraintViolation
from mixture_qp.solvers import ACTIVE_SET, FIXED_POINT


class Command(ToolkitCommand):
    help = 'Solve the mixture-weight QP from src-tagged batch data'

    def add_arguments(self, parser):
        parser.add_argument('--env', required=True, help='MDP JSON file')
        parser.add_argument('--ensemble', required=True, help='ensemble JSON file')
        parser.add_argument('--batch', required=True, help='batch JSONL, rows tagged by src')
        parser.add_argument('--alpha', type=float, nargs='+', default=None,
                            help='anchor weights (last base by default)')
        parser.add_argument('--advantage', choices=('exact', 'batch'), default='batch')
        parser.add_argument('--lr', type=float, default=0.1)
        parser.add_argument('--epochs', type=int, default=100)
        parser.add_argument('--kkt-method', dest='kkt_method', choices=(FIXED_POINT, ACTIVE_SET),
                            default=FIXED_POINT, help='first closed-form path tried')

    def run(self, **options):
        mdp = load_mdp(options['env'])
        ensemble = load_ensemble(options['ensemble'])
        batch = load_batch(options['batch'], mdp)
        alpha = np.array(options['alpha']) if options['alpha'] else np.eye(ensemble.m)[-1]
        if alpha.shape != (ensemble.m,):
            raise ConstraintViolation(f'alpha needs {ensemble.m} entries')
        batches = {j: part for j, part in batch.by_source().items() if alpha[j - 1] > 0}
        solution, lam, _ = solve_from_batches(mdp, ensemble, batches, alpha,
                                              options['advantage'], lr=options['lr'],
                                              epochs=options['epochs'],
                                              kkt_method=options['kkt_method'])
        document = {
            'lam': lam.lam.tolist(),
            'nu': solution.nu.tolist(),
            'kappa': solution.kappa.tolist(),
            'kkt_residual': solution.kkt_residual,
            'iterations': solution.iterations,
            'method': solution.method,
            'path': solution.path,
            'objective': solution.objective,
        }
        self.emit(dump_json(document), options['out'])
