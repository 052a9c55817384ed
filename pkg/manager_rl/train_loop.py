"""
The mixture RL loop: per minibatch, solve for mixture weights against the
hybrid critic's weighted advantage, fit the candidate, refresh it, then
step the critic and mix its target table.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from critic_hybrid.critics import hybrid_td_step, td_target, weighted_advantage
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import FiniteMdp, TabularPolicy, expected_return
from mixture_qp.fitting import fit_and_project, lambda_tabular
from mixture_qp.saa import assemble_qp, build_saa
from mixture_qp.solvers import solve_kkt
from moe_policy.mixture import BaseEnsemble, MixtureWeights, compose, soft_improvement

logger = logging.getLogger(__name__)

SKIPPED_METHOD = 'no-deviation'


@dataclass
class TrainLoopConfig:
    batch: object
    behavior: TabularPolicy
    iterations: int
    candidate: TabularPolicy = None
    mdp: FiniteMdp = None
    gamma: float = 0.8
    mu_mix: float = 0.0
    minibatch_size: int = 32
    shuffle: bool = True
    seed: int = 0
    lr: float = 0.1
    tau: float = 0.05
    inner_steps: int = 1
    eta: float = 1.0
    refresh: bool = True
    fit_lr: float = 0.5
    fit_steps: int = 200
    kkt_tol: float = 1e-8
    kkt_max_iter: int = 1000
    psd_tol: float = 1e-9

    def __post_init__(self):
        if self.iterations < 0:
            raise ConstraintViolation(f'iterations must be >= 0, got {self.iterations}')
        if self.minibatch_size < 1:
            raise ConstraintViolation(f'minibatch_size must be >= 1, got {self.minibatch_size}')
        if not 0.0 <= self.mu_mix <= 1.0:
            raise ConstraintViolation(f'mu_mix must lie in [0, 1], got {self.mu_mix}')
        if not 0.0 < self.tau <= 1.0:
            raise ConstraintViolation(f'tau must lie in (0, 1], got {self.tau}')
        if len(self.batch) == 0:
            raise ConstraintViolation('train_loop needs a nonempty batch')
        if self.mdp is not None:
            self.gamma = self.mdp.gamma


@dataclass
class TrainingReport:
    q: np.ndarray
    q_target: np.ndarray
    rho: TabularPolicy
    lam: MixtureWeights
    policy: TabularPolicy
    metrics: list = field(default_factory=list)


def _minibatches(config):
    """Index arrays per iteration; shuffle=False cycles through the batch in order"""
    n = len(config.batch)
    size = min(config.minibatch_size, n)
    rng = np.random.default_rng(config.seed)
    for k in range(config.iterations):
        if config.shuffle:
            yield rng.choice(n, size=size, replace=False)
        else:
            yield (k * size + np.arange(size)) % n


def _mixture_step(config, ensemble, minibatch, w):
    """solve_kkt on the minibatch SAA then KL-fit and project; returns (lam, solution)"""
    n_states, n_actions = ensemble.n_states, ensemble.n_actions
    if np.abs(ensemble.deviations()).max() <= 1e-15:
        return MixtureWeights.zeros(n_states, n_actions, 2), None
    saa = build_saa({2: minibatch}, ensemble, {2: w}, alpha=np.array([0.0, 1.0]),
                    gamma=config.gamma)
    qp = assemble_qp(saa)
    solution = solve_kkt(qp, tol=config.kkt_tol, max_iter=config.kkt_max_iter,
                         psd_tol=config.psd_tol)
    lam_star = lambda_tabular(solution, saa.index_map, n_states, n_actions, m=2)
    lam = fit_and_project(minibatch, lam_star, ensemble.base(2), ensemble.base(1),
                          lr=config.fit_lr, steps=config.fit_steps)
    return lam, solution


def train_loop(config):
    """
    Run `iterations` rounds over a two-base ensemble [rho, beta] anchored
    on the behavior policy beta; rho starts at `candidate` (beta if unset).
    """
    behavior = config.behavior
    rho = config.candidate if config.candidate is not None else behavior
    n_states, n_actions = behavior.n_states, behavior.n_actions
    q = np.zeros((n_states, n_actions))
    q_target = q.copy()
    lam = MixtureWeights.zeros(n_states, n_actions, 2)
    policy = behavior
    metrics = []

    for iteration, indices in enumerate(_minibatches(config), start=1):
        minibatch = config.batch.subset(indices)
        w = weighted_advantage(q, behavior, config.mu_mix).w
        ensemble = BaseEnsemble([rho, behavior])
        lam, solution = _mixture_step(config, ensemble, minibatch, w)
        policy = compose(ensemble, lam)
        if config.refresh:
            rho = soft_improvement(behavior, w, eta=config.eta)

        td_errors = [td_target(t.r, t.sp, q_target, config.gamma, config.mu_mix, behavior)
                     - q[t.s, t.a] for t in minibatch]
        hybrid_td_step(q, q_target, minibatch, config.gamma, config.mu_mix, behavior,
                       config.lr, inner_steps=config.inner_steps)
        q_target = config.tau * q + (1.0 - config.tau) * q_target

        row = {
            'iteration': iteration,
            'method': solution.method if solution is not None else SKIPPED_METHOD,
            'qp_objective': solution.objective if solution is not None else 0.0,
            'kkt_residual': solution.kkt_residual if solution is not None else 0.0,
            'td_error': float(np.mean(np.abs(td_errors))),
        }
        if config.mdp is not None:
            row['return_estimate'] = expected_return(config.mdp, policy)
        metrics.append(row)
        logger.debug('iteration %d: %s', iteration, row)

    if metrics:
        logger.info('train loop finished %d iterations (last method %s)',
                    len(metrics), metrics[-1]['method'])
    return TrainingReport(q=q, q_target=q_target, rho=rho, lam=lam, policy=policy,
                          metrics=metrics)
