"""
Mixture-of-experts policy algebra.

Base policies are indexed 1..m in the public API; the last base is the
anchor unless an ensemble is re-anchored. Mixture weights lam(s, a, i)
cover the m - 1 non-anchor bases in ensemble order.
"""
import logging
from dataclasses import dataclass

import numpy as np

from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import TabularPolicy

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
DEFAULT_SUPPORT_FLOOR = 1e-6


class BaseEnsemble:
    """Ordered base policies mu_1..mu_m with an optional support floor"""

    def __init__(self, bases, support_floor=DEFAULT_SUPPORT_FLOOR):
        bases = list(bases)
        if len(bases) < 2:
            raise ConstraintViolation(f'an ensemble needs at least two bases, got {len(bases)}')
        shape = bases[0].probs.shape
        if any(base.probs.shape != shape for base in bases):
            raise ConstraintViolation('all bases must share one (S, A) shape')
        if support_floor < 0:
            raise ConstraintViolation(f'support_floor must be >= 0, got {support_floor}')
        self.support_floor = float(support_floor)
        self.bases = tuple(self._floored(base) for base in bases)
        self.probs = np.stack([base.probs for base in self.bases])
        self.probs.flags.writeable = False

    def _floored(self, base):
        """Mix with uniform just enough to reach the floor"""
        if self.support_floor == 0 or base.probs.min() >= self.support_floor:
            return base
        n_actions = base.n_actions
        weight = min(1.0, self.support_floor * n_actions)
        logger.debug('mixing base with uniform at weight %.3e to reach support floor', weight)
        return TabularPolicy((1.0 - weight) * base.probs + weight / n_actions)

    @property
    def m(self):
        return len(self.bases)

    @property
    def n_states(self):
        return self.probs.shape[1]

    @property
    def n_actions(self):
        return self.probs.shape[2]

    def base(self, j):
        """Base policy by 1-based index"""
        check_expert_index(j, self.m)
        return self.bases[j - 1]

    def anchor(self):
        return self.bases[-1]

    def reanchored(self, p):
        """Same bases with base p moved to the anchor slot"""
        check_expert_index(p, self.m)
        if p == self.m:
            return self
        order = [base for index, base in enumerate(self.bases, start=1) if index != p]
        return BaseEnsemble(order + [self.bases[p - 1]], support_floor=self.support_floor)

    def deviations(self):
        """(m-1, S, A) stack of mu_i - mu_m"""
        return self.probs[:-1] - self.probs[-1]

    def to_dict(self):
        return {
            'bases': [base.probs.tolist() for base in self.bases],
            'support_floor': self.support_floor,
        }


def check_expert_index(j, m):
    if not 1 <= int(j) <= m:
        raise ConstraintViolation(f'expert index {j} outside 1..{m}')


class MixtureWeights:
    """lam(s, a, i) for the m - 1 non-anchor bases"""

    def __init__(self, lam):
        lam = np.array(lam, dtype=float)
        if lam.ndim != 3 or lam.shape[2] < 1:
            raise ConstraintViolation(f'mixture weights must be (S, A, m-1), got {lam.shape}')
        if not np.all(np.isfinite(lam)):
            raise ConstraintViolation('mixture weights contain non-finite entries')
        lam.flags.writeable = False
        self.lam = lam

    @classmethod
    def zeros(cls, n_states, n_actions, m):
        return cls(np.zeros((n_states, n_actions, m - 1)))

    @property
    def m(self):
        return self.lam.shape[2] + 1

    def to_dict(self):
        return {'lam': self.lam.tolist()}

    def __repr__(self):
        n_states, n_actions, channels = self.lam.shape
        return f'MixtureWeights(n_states={n_states}, n_actions={n_actions}, m={channels + 1})'


@dataclass(frozen=True)
class FeasibilityReport:
    box: float
    simplex: float
    equality: float

    @property
    def feasible(self):
        return max(self.box, self.simplex, self.equality) <= FEASIBILITY_TOL

    def worst(self):
        return max(('box', self.box), ('simplex', self.simplex), ('equality', self.equality),
                   key=lambda item: item[1])


def _check_weight_shape(ensemble, lam):
    expected = (ensemble.n_states, ensemble.n_actions, ensemble.m - 1)
    if lam.lam.shape != expected:
        raise ConstraintViolation(f'mixture weights shape {lam.lam.shape}, expected {expected}')


def equality_residuals(ensemble, lam):
    """Per-state sum_a sum_i lam(s,a,i) (mu_i - mu_m)(a|s)"""
    _check_weight_shape(ensemble, lam)
    return np.einsum('sai,isa->s', lam.lam, ensemble.deviations())


def check_feasible(ensemble, lam):
    """Box, simplex and per-state equality violations"""
    _check_weight_shape(ensemble, lam)
    weights = lam.lam
    box = max(0.0, float(np.max(-weights)), float(np.max(weights - 1.0)))
    simplex = max(0.0, float(np.max(weights.sum(axis=2) - 1.0)))
    equality = float(np.abs(equality_residuals(ensemble, lam)).max())
    return FeasibilityReport(box=box, simplex=simplex, equality=equality)


def compose(ensemble, lam):
    """pi(a|s) = sum_i lam_i mu_i + (1 - sum_i lam_i) mu_m"""
    report = check_feasible(ensemble, lam)
    if not report.feasible:
        name, value = report.worst()
        raise ConstraintViolation(f'infeasible mixture weights: {name} violation {value:.3e}',
                                  worst=name)
    mixed = ensemble.probs[-1] + np.einsum('sai,isa->sa', lam.lam, ensemble.deviations())
    return TabularPolicy(mixed)


def transform_f(lam, j):
    """
    Re-anchor weights on expert j (1-based) along the last axis.

    j = m appends a zero; j < m zeroes slot j and appends 1 - sum(lam).
    """
    lam = np.asarray(lam, dtype=float)
    m = lam.shape[-1] + 1
    check_expert_index(j, m)
    if j == m:
        tail = np.zeros(lam.shape[:-1] + (1,))
        return np.concatenate([lam, tail], axis=-1)
    out = np.concatenate([lam, 1.0 - lam.sum(axis=-1, keepdims=True)], axis=-1)
    out[..., j - 1] = 0.0
    return out


def lambda_from_candidate(pi_phi, mu, rho):
    """Confidence (pi_phi - mu) / (rho - mu), clamped, 0 where rho == mu"""
    gap = rho.probs - mu.probs
    degenerate = np.abs(gap) <= 1e-15
    safe_gap = np.where(degenerate, 1.0, gap)
    lam = np.clip((pi_phi.probs - mu.probs) / safe_gap, 0.0, 1.0)
    return np.where(degenerate, 0.0, lam)


def state_only_weights(lam_s, n_actions):
    """Broadcast state-only lam(s, i) over actions"""
    lam_s = np.asarray(lam_s, dtype=float)
    if lam_s.ndim == 1:
        lam_s = lam_s[:, None]
    return MixtureWeights(np.repeat(lam_s[:, None, :], n_actions, axis=1))


def soft_improvement(beta, w, eta=1.0):
    """Candidate refresh rho(a|s) proportional to beta(a|s) exp(eta W(s, a))"""
    w = np.asarray(w, dtype=float)
    logits = np.log(np.clip(beta.probs, 1e-300, None)) + eta * w
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.where(beta.probs > 0, np.exp(logits), 0.0)
    return TabularPolicy(weights / weights.sum(axis=1, keepdims=True))
