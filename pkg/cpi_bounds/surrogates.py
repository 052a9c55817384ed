"""
CPI-style surrogate terms and the lower bounds built on them
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import (
    advantage,
    expected_return,
    occupancy,
    occupancy_from_each_state,
    policy_value,
)
from moe_policy.mixture import check_expert_index, compose, transform_f

logger = logging.getLogger(__name__)

VARIANTS = ('cpi', 'cpi-mean-l3', 'alpha-combined', 'trpo', 'pinsker')


@dataclass(frozen=True)
class SurrogateTerms:
    l1: float
    l2: float
    l3_max: float
    l3_per_s0: np.ndarray
    l4: float


@dataclass(frozen=True)
class BoundReport:
    bound: float
    true_diff: float
    slack: float
    variant: str

    def to_dict(self):
        return asdict(self)


def _report(bound, true_diff, variant):
    return BoundReport(bound=float(bound), true_diff=float(true_diff),
                       slack=float(true_diff - bound), variant=variant)


def per_state_terms(mdp, ensemble, lam, j):
    """(g1, g2, g3) per state for anchor j, plus mu_j's advantage"""
    check_expert_index(j, ensemble.m)
    weights = transform_f(lam.lam, j)
    shift = np.moveaxis(ensemble.probs - ensemble.probs[j - 1], 0, -1)
    adv = advantage(mdp, ensemble.base(j))
    g1 = np.einsum('sai,sai,sa->s', weights, shift, adv)
    g2 = np.einsum('sai,sai->s', weights, np.abs(shift))
    g3 = np.einsum('sai,sai,sa->s', weights, np.abs(shift), np.abs(adv))
    return g1, g2, g3


def surrogate_terms(mdp, ensemble, lam, j=None):
    """L', L'', L''' per start state and L'''' for anchor expert j (default m)"""
    j = ensemble.m if j is None else j
    g1, g2, g3 = per_state_terms(mdp, ensemble, lam, j)
    base = ensemble.base(j)
    d = occupancy(mdp, base).d
    l3_per_s0 = occupancy_from_each_state(mdp, base) @ g3
    return SurrogateTerms(
        l1=float(d @ g1),
        l2=float(d @ g2),
        l3_max=float(l3_per_s0.max()),
        l3_per_s0=l3_per_s0,
        l4=float(mdp.initial_dist @ l3_per_s0),
    )


def cpi_lower_bound(terms, gamma, use_max_l3=True):
    """(1/(1-g)) (L' - (g/(1-g)) L'' L3)"""
    l3 = terms.l3_max if use_max_l3 else terms.l4
    return (terms.l1 - gamma / (1.0 - gamma) * terms.l2 * l3) / (1.0 - gamma)


def cpi_report(mdp, ensemble, lam, j=None, use_max_l3=True):
    j = ensemble.m if j is None else j
    terms = surrogate_terms(mdp, ensemble, lam, j)
    bound = cpi_lower_bound(terms, mdp.gamma, use_max_l3)
    true_diff = expected_return(mdp, compose(ensemble, lam)) - expected_return(mdp, ensemble.base(j))
    return _report(bound, true_diff, 'cpi' if use_max_l3 else 'cpi-mean-l3')


def alpha_combined_bound(mdp, ensemble, lam, alpha):
    """sum_j alpha_j (J_mu_j + L_j / (1 - gamma)) with the l4 penalty"""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (ensemble.m,):
        raise ConstraintViolation(f'alpha must have length {ensemble.m}')
    if alpha.min() < -1e-9 or abs(alpha.sum() - 1.0) > 1e-9:
        raise ConstraintViolation(f'alpha is not a point of the simplex: {alpha.tolist()}')
    bound = 0.0
    for j, weight in enumerate(alpha, start=1):
        if weight == 0:
            continue
        terms = surrogate_terms(mdp, ensemble, lam, j)
        bound += weight * (expected_return(mdp, ensemble.base(j))
                           + cpi_lower_bound(terms, mdp.gamma, use_max_l3=False))
    return _report(bound, expected_return(mdp, compose(ensemble, lam)), 'alpha-combined')


def kl_rows(p, q):
    """Row-wise KL(p || q) with 0 log 0 = 0"""
    p, q = np.broadcast_arrays(p, q)
    if np.any((q <= 0) & (p > 0)):
        raise ConstraintViolation('KL undefined: q has no support where p has mass; '
                                  'set a positive support_floor')
    ratio = np.where(p > 0, p / np.where(q > 0, q, 1.0), 1.0)
    return np.einsum('...a,...a->...', p, np.log(ratio))


def trpo_bound(mdp, ensemble, lam, w, p=None, action_reduction='mean'):
    """
    Baseline-W bound with a total-variation penalty via Pinsker.

    action_reduction picks how the state-action weights lam_i(s, .) are
    reduced to a per-state factor: 'mean' averages them under Psi_p,
    'max' takes the largest one and always dominates TV(pi_lam, Psi_p).
    """
    anchored = ensemble.reanchored(ensemble.m if p is None else p)
    anchor, mixture = anchored.anchor(), compose(anchored, lam)
    w = np.asarray(w, dtype=float)
    gamma = mdp.gamma

    delta_w = mdp.reward + gamma * mdp.transition @ w - w[:, None]
    d = occupancy(mdp, anchor).d
    surrogate = d @ np.einsum('sa,sa->s', mixture.probs - anchor.probs, delta_w)
    epsilon = float(np.abs(np.einsum('sa,sa->s', mixture.probs, delta_w)).max())

    kl = kl_rows(anchor.probs[None], anchored.probs[:-1])
    if action_reduction == 'mean':
        factors = np.einsum('sa,sai->is', anchor.probs, lam.lam)
    elif action_reduction == 'max':
        factors = lam.lam.max(axis=1).T
    else:
        raise ConstraintViolation(f'unknown action_reduction {action_reduction!r}')
    divergence = d @ np.einsum('is,is->s', factors, np.sqrt(0.5 * kl))

    bound = surrogate / (1.0 - gamma) - 2.0 * gamma * epsilon / (1.0 - gamma) ** 2 * divergence
    true_diff = expected_return(mdp, mixture) - expected_return(mdp, anchor)
    return _report(bound, true_diff, 'trpo')


def pinsker_bound(mdp, ensemble, lam, p=None):
    """KL-penalized relaxation of the l4-form CPI bound"""
    anchored = ensemble.reanchored(ensemble.m if p is None else p)
    anchor, mixture = anchored.anchor(), compose(anchored, lam)
    gamma = mdp.gamma
    adv = advantage(mdp, anchor)
    d = occupancy(mdp, anchor).d
    gain = d @ np.einsum('sa,sa->s', mixture.probs, adv) / (1.0 - gamma)
    kl = d @ kl_rows(mixture.probs, anchor.probs)
    coefficient = 2.0 * gamma * np.abs(adv).max() / (1.0 - gamma) ** 2
    bound = gain - coefficient * kl
    true_diff = expected_return(mdp, mixture) - expected_return(mdp, anchor)
    return _report(bound, true_diff, 'pinsker')


def evaluate_bounds(mdp, ensemble, lam, alpha=None, w=None):
    """One report per variant, anchored on the last base"""
    if alpha is None:
        alpha = np.eye(ensemble.m)[-1]
    if w is None:
        w = policy_value(mdp, ensemble.anchor())
    reports = [
        cpi_report(mdp, ensemble, lam, use_max_l3=True),
        cpi_report(mdp, ensemble, lam, use_max_l3=False),
        alpha_combined_bound(mdp, ensemble, lam, alpha),
        trpo_bound(mdp, ensemble, lam, w),
        pinsker_bound(mdp, ensemble, lam),
    ]
    for report in reports:
        if report.slack < -1e-10:
            logger.warning('%s bound exceeds the true difference by %.3e',
                           report.variant, -report.slack)
    return reports
