"""
Difference-value identities between a mixture policy and its anchor base
"""
from dataclasses import dataclass

import numpy as np

from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import advantage, policy_transition, policy_value, resolvent_solve
from moe_policy.mixture import compose


@dataclass(frozen=True)
class DifferenceReport:
    exact: np.ndarray
    via_mixture_adv: np.ndarray
    via_base_adv: np.ndarray
    max_discrepancy: float

    def to_dict(self):
        return {
            'exact': self.exact.tolist(),
            'via_mixture_adv': self.via_mixture_adv.tolist(),
            'via_base_adv': self.via_base_adv.tolist(),
            'max_discrepancy': self.max_discrepancy,
        }


def _anchored(ensemble, lam, p):
    """Ensemble anchored on p together with the composed mixture"""
    anchored = ensemble.reanchored(ensemble.m if p is None else p)
    return anchored, compose(anchored, lam)


def _require_anchor_support(ensemble):
    if ensemble.anchor().probs.min() <= 0.0:
        raise ConstraintViolation('anchor base has zero-probability actions; '
                                  'set a positive support_floor')


def _mixture_shift(ensemble, lam):
    """sum_i lam_i(s, a) (Psi_i - Psi_p)(a|s)"""
    return np.einsum('sai,isa->sa', lam.lam, ensemble.deviations())


def diff_exact(mdp, ensemble, lam, p=None):
    """V_pi_lam - V_Psi_p from two exact solves"""
    anchored, mixture = _anchored(ensemble, lam, p)
    return policy_value(mdp, mixture) - policy_value(mdp, anchored.anchor())


def diff_via_mixture_advantage(mdp, ensemble, lam, p=None):
    """Mixture-advantage difference reward accumulated along the base chain"""
    anchored, mixture = _anchored(ensemble, lam, p)
    _require_anchor_support(anchored)
    reward = np.einsum('sa,sa->s', _mixture_shift(anchored, lam), advantage(mdp, mixture))
    return resolvent_solve(mdp, policy_transition(mdp, anchored.anchor()), reward)


def diff_via_base_advantage(mdp, ensemble, lam, p=None):
    """Base-advantage difference reward accumulated along the mixture chain"""
    anchored, mixture = _anchored(ensemble, lam, p)
    _require_anchor_support(anchored)
    reward = np.einsum('sa,sa->s', _mixture_shift(anchored, lam),
                       advantage(mdp, anchored.anchor()))
    return resolvent_solve(mdp, policy_transition(mdp, mixture), reward)


def modified_kernel(mdp, ensemble, lam, p=None):
    """(Delta P, P') with P' = P_Psi_p + Delta P"""
    anchored, _ = _anchored(ensemble, lam, p)
    delta = np.einsum('sa,sat->st', _mixture_shift(anchored, lam), mdp.transition)
    return delta, policy_transition(mdp, anchored.anchor()) + delta


def difference_report(mdp, ensemble, lam, p=None):
    exact = diff_exact(mdp, ensemble, lam, p)
    via_mixture = diff_via_mixture_advantage(mdp, ensemble, lam, p)
    via_base = diff_via_base_advantage(mdp, ensemble, lam, p)
    discrepancy = max(np.abs(exact - via_mixture).max(), np.abs(exact - via_base).max(),
                      np.abs(via_mixture - via_base).max())
    return DifferenceReport(exact=exact, via_mixture_adv=via_mixture, via_base_adv=via_base,
                            max_discrepancy=float(discrepancy))
