"""
Sample-average surrogates over batch data and their quadratic program.

Decision variables are flattened in (s, a, i) row-major order over the
states seen in any batch and their candidate actions; i is the 0-based
non-anchor channel.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from mdp_core.exceptions import ConstraintViolation
from moe_policy.mixture import transform_f

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AffineForm:
    const: float
    coef: np.ndarray

    def evaluate(self, x):
        return float(self.const + self.coef @ x)


@dataclass(frozen=True)
class SaaSurrogate:
    """Per-anchor affine forms of L', L'' and L'''' plus the index layout"""
    index_map: tuple
    forms: dict
    alpha: np.ndarray
    gamma: float
    n_states: int
    n_actions: int
    m: int
    candidates: dict
    deviations: np.ndarray = field(repr=False)

    def objective(self, x):
        """sum_j alpha_j (L'_j - gamma L''_j L''''_j) at the flat vector x"""
        total = 0.0
        for j, forms in self.forms.items():
            total += self.alpha[j - 1] * (
                forms['l1'].evaluate(x)
                - self.gamma * forms['l2'].evaluate(x) * forms['l4'].evaluate(x))
        return total


def _anchor_maps(m, j):
    """f_j[lam] = F lam + g as an (m, m-1) matrix and offset"""
    offset = transform_f(np.zeros(m - 1), j)
    columns = [transform_f(np.eye(m - 1)[i], j) - offset for i in range(m - 1)]
    return np.stack(columns, axis=1), offset


def _union_candidates(batches):
    candidates = {}
    for src, batch in batches.items():
        for s, cand in batch.candidate_sets().items():
            if candidates.setdefault(s, cand) != cand:
                raise ConstraintViolation(
                    f'batch {src}: candidate set {cand} for state {s} conflicts with '
                    f'{candidates[s]}', worst=s)
    return dict(sorted(candidates.items()))


def build_saa(batches, ensemble, advantages, alpha, gamma):
    """
    Affine SAA forms for every anchor j with positive alpha_j.

    batches and advantages are dicts keyed by the 1-based anchor index.
    """
    m = ensemble.m
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (m,) or alpha.min() < -1e-9 or abs(alpha.sum() - 1.0) > 1e-9:
        raise ConstraintViolation(f'alpha must be a point of the {m}-simplex')
    anchors = [j for j in range(1, m + 1) if alpha[j - 1] > 0]
    for j in anchors:
        if j not in batches or len(batches[j]) == 0:
            raise ConstraintViolation(f'anchor {j} has positive alpha but no batch')

    candidates = _union_candidates({j: batches[j] for j in anchors})
    index_map = tuple((s, a, i) for s, cand in candidates.items() for a in cand
                      for i in range(m - 1))
    n = len(index_map)
    states = np.array([k[0] for k in index_map], dtype=int)
    actions = np.array([k[1] for k in index_map], dtype=int)
    channels = np.array([k[2] for k in index_map], dtype=int)
    deviations = ensemble.deviations()[channels, states, actions] if n else np.zeros(0)
    scale = 1.0 / (1.0 - gamma)

    forms = {}
    for j in anchors:
        batch = batches[j]
        total = batch.total_weight
        state_weight = {s: weight / total for s, weight in batch.state_weights().items()}
        shift = ensemble.probs - ensemble.probs[j - 1]
        adv = np.asarray(advantages[j], dtype=float)
        maps, offset = _anchor_maps(m, j)
        pieces = {'l1': (shift, adv), 'l2': (np.abs(shift), None),
                  'l4': (np.abs(shift), np.abs(adv))}
        anchor_forms = {}
        for name, (dev, weight_table) in pieces.items():
            const = 0.0
            coef = np.zeros(n)
            for s, cand in candidates.items():
                if s not in state_weight:
                    continue
                for a in cand:
                    # c[i'] is the per-expert payoff at (s, a)
                    c = dev[:, s, a] * (1.0 if weight_table is None else weight_table[s, a])
                    const += state_weight[s] * (offset @ c)
                    block = (states == s) & (actions == a)
                    coef[block] = state_weight[s] * (c @ maps)
            anchor_forms[name] = AffineForm(const=scale * const, coef=scale * coef)
        forms[j] = anchor_forms
        logger.debug('built SAA forms for anchor %d over %d transitions', j, len(batch))

    return SaaSurrogate(index_map=index_map, forms=forms, alpha=alpha, gamma=gamma,
                        n_states=ensemble.n_states, n_actions=ensemble.n_actions, m=m,
                        candidates=candidates, deviations=deviations)


class QpProblem:
    """maximize c.x - 1/2 x'Qx + const  s.t.  Mx = 0, Nx <= 1, 0 <= x <= 1"""

    def __init__(self, quad, lin, eq_matrix, ineq_matrix, const=0.0, index_map=None,
                 blocks=None):
        self.quad = np.asarray(quad, dtype=float)
        self.lin = np.asarray(lin, dtype=float)
        n = len(self.lin)
        self.eq_matrix = np.asarray(eq_matrix, dtype=float).reshape(-1, n)
        self.ineq_matrix = np.asarray(ineq_matrix, dtype=float).reshape(-1, n)
        self.const = float(const)
        self.index_map = tuple(index_map) if index_map is not None else None
        if self.quad.shape != (n, n):
            raise ConstraintViolation(f'quad must be ({n}, {n}), got {self.quad.shape}')
        if np.abs(self.quad - self.quad.T).max(initial=0.0) > 1e-12:
            raise ConstraintViolation('quad is not symmetric')
        self.blocks = blocks if blocks is not None else self._derive_blocks()

    @property
    def n(self):
        return len(self.lin)

    def objective(self, x):
        return float(self.lin @ x - 0.5 * x @ self.quad @ x + self.const)

    def gradient(self, x):
        return self.lin - self.quad @ x

    def _derive_blocks(self):
        """Group simplex rows under the equality row that touches them"""
        groups = [np.flatnonzero(row) for row in self.ineq_matrix]
        covered = np.zeros(self.n, dtype=bool)
        for members in groups:
            covered[members] = True
        groups += [np.array([k]) for k in np.flatnonzero(~covered)]
        blocks = {}
        for members in groups:
            touching = np.flatnonzero(np.any(self.eq_matrix[:, members] != 0, axis=1))
            key = int(touching[0]) if len(touching) else None
            blocks.setdefault(key, []).append(members)
        return [(row, groups) for row, groups in blocks.items()]

    def null_space(self):
        """Orthonormal basis of ker(M)"""
        if len(self.eq_matrix) == 0:
            return np.eye(self.n)
        _, singular, vt = np.linalg.svd(self.eq_matrix)
        rank = int((singular > 1e-12 * max(1.0, singular.max(initial=0.0))).sum())
        return vt[rank:].T

    def reduced_hessian(self):
        basis = self.null_space()
        return basis.T @ self.quad @ basis

    def min_curvature(self):
        """Smallest eigenvalue of Q on ker(M); +inf when ker(M) is trivial"""
        reduced = self.reduced_hessian()
        if reduced.size == 0:
            return float('inf')
        return float(np.linalg.eigvalsh(reduced).min())

    def __repr__(self):
        return f'QpProblem(n={self.n}, eq_rows={len(self.eq_matrix)}, ineq_rows={len(self.ineq_matrix)})'


def assemble_qp(saa):
    """Expand the SAA objective into (Q, c, const) with M and N constraint rows"""
    n = len(saa.index_map)
    gamma = saa.gamma
    quad = np.zeros((n, n))
    lin = np.zeros(n)
    const = 0.0
    for j, forms in saa.forms.items():
        weight = saa.alpha[j - 1]
        l1, l2, l4 = forms['l1'], forms['l2'], forms['l4']
        outer = np.outer(l2.coef, l4.coef)
        quad += weight * gamma * (outer + outer.T)
        lin += weight * (l1.coef - gamma * (l2.const * l4.coef + l4.const * l2.coef))
        const += weight * (l1.const - gamma * l2.const * l4.const)

    states = [s for s in saa.candidates]
    pairs = [(s, a) for s, cand in saa.candidates.items() for a in cand]
    eq_matrix = np.zeros((len(states), n))
    ineq_matrix = np.zeros((len(pairs), n))
    row_of_state = {s: row for row, s in enumerate(states)}
    row_of_pair = {pair: row for row, pair in enumerate(pairs)}
    for k, (s, a, _) in enumerate(saa.index_map):
        eq_matrix[row_of_state[s], k] = saa.deviations[k]
        ineq_matrix[row_of_pair[(s, a)], k] = 1.0

    blocks = []
    for s, cand in saa.candidates.items():
        members = [np.array([k for k, key in enumerate(saa.index_map) if key[:2] == (s, a)])
                   for a in cand]
        blocks.append((row_of_state[s], members))
    return QpProblem(quad, lin, eq_matrix, ineq_matrix, const=const,
                     index_map=saa.index_map, blocks=blocks)
