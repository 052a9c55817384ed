"""
From QP solutions to tabular mixture weights and fitted candidate policies
"""
import logging
from dataclasses import dataclass

import numpy as np

from critic_hybrid.critics import sarsa_batch
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import TabularPolicy
from moe_policy.mixture import (
    FEASIBILITY_TOL,
    BaseEnsemble,
    MixtureWeights,
    compose,
    lambda_from_candidate,
)

from .projection import project_closed_form, project_exact

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdvantageEstimate:
    table: np.ndarray
    unvisited: tuple


def estimate_advantage_from_batch(batch, mu_j, gamma, lr=0.1, epochs=100):
    """Expected-SARSA Q under mu_j turned into A = Q - E_mu_j[Q]; unseen states get A = 0"""
    q = sarsa_batch(batch, mu_j, gamma, lr=lr, epochs=epochs)
    table = q - np.einsum('sa,sa->s', mu_j.probs, q)[:, None]
    visited = {item.s for item in batch}
    unvisited = tuple(s for s in range(mu_j.n_states) if s not in visited)
    table[list(unvisited)] = 0.0
    if unvisited:
        logger.info('advantage rows left at zero for unvisited states %s', unvisited)
    return AdvantageEstimate(table=table, unvisited=unvisited)


def lambda_tabular(solution, index_map, n_states, n_actions, m=2):
    """Scatter the solution vector into lam(s, a, i); entries outside the batch stay 0"""
    lam = np.zeros((n_states, n_actions, m - 1))
    for value, (s, a, i) in zip(solution.lam_star, index_map):
        lam[s, a, i] = value
    return MixtureWeights(lam)


def _target_mixture(lam_star, mu, rho):
    """(1 - lam) mu + lam rho, i.e. the two-base mixture anchored on mu"""
    return compose(BaseEnsemble([rho, mu], support_floor=0.0), lam_star).probs


def _kl_objective(probs, target, state_weight):
    safe = np.where(probs > 0, probs / np.where(target > 0, target, 1.0), 1.0)
    return float(state_weight @ np.einsum('sa,sa->s', probs, np.log(safe)))


def fit_candidate_with_trace(batch, lam_star, mu, rho, lr=0.5, steps=200):
    """
    Tabular KL fit of pi_phi to the target mixture on visited states.

    Each step moves pi_phi along the geometric path toward the target,
    pi <- pi^(1 - lr) target^lr (normalized), which never increases
    KL(pi || target) for 0 < lr <= 1.
    """
    if not 0.0 < lr <= 1.0:
        raise ConstraintViolation(f'lr must lie in (0, 1], got {lr}')
    target = _target_mixture(lam_star, mu, rho)
    state_weight = np.zeros(mu.n_states)
    for item in batch:
        state_weight[item.s] += item.weight
    total = state_weight.sum()
    if total > 0:
        state_weight /= total
    visited = state_weight > 0

    probs = mu.probs.copy()
    lacking = visited & np.any((probs <= 0) & (target > 0), axis=1)
    probs[lacking] = 0.999 * probs[lacking] + 0.001 * (target[lacking] > 0) / (
        (target[lacking] > 0).sum(axis=1, keepdims=True))
    trace = [_kl_objective(probs, target, state_weight)]
    log_target = np.log(np.where(target > 0, target, 1.0))
    for _ in range(steps):
        logits = (1.0 - lr) * np.log(np.where(probs > 0, probs, 1.0)) + lr * log_target
        logits -= logits.max(axis=1, keepdims=True)
        step = np.where((target > 0) & (probs > 0), np.exp(logits), 0.0)
        sums = step.sum(axis=1, keepdims=True)
        step = step / np.where(sums > 0, sums, 1.0)
        probs = np.where(visited[:, None], step, probs)
        trace.append(_kl_objective(probs, target, state_weight))
    return TabularPolicy(probs), trace


def kl_fit_candidate(batch, lam_star, mu, rho, lr=0.5, steps=200):
    return fit_candidate_with_trace(batch, lam_star, mu, rho, lr=lr, steps=steps)[0]


def fit_and_project(batch, lam_star, mu, rho, lr=0.5, steps=200):
    """
    KL-fit pi_phi, read off lam_phi, then restore the equality constraint
    per visited state with the closed-form layer (exact projection when
    clipping breaks it).
    """
    pi_phi = kl_fit_candidate(batch, lam_star, mu, rho, lr=lr, steps=steps)
    lam = lambda_from_candidate(pi_phi, mu, rho)
    visited = sorted({item.s for item in batch})
    for s in range(mu.n_states):
        if s not in visited:
            lam[s] = 0.0
            continue
        projected = project_closed_form(lam[s], rho.probs[s], mu.probs[s])
        if abs((rho.probs[s] - mu.probs[s]) @ projected) > FEASIBILITY_TOL:
            projected = project_exact(lam[s], rho.probs[s], mu.probs[s])
        lam[s] = projected
    return MixtureWeights(lam[:, :, None])
