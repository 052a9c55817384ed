"""
Exact manager values by enumerating the expanded space S x A^(m+1)
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from mdp_core.exceptions import CapacityExceeded, ConvergenceError

logger = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 100_000


@dataclass(frozen=True)
class CandidateTable:
    """Per state: ordered candidate tuples (n_c, m+1) and their probabilities"""
    tuples: list
    probs: list


def enumerate_candidates(mdp, experts, cap=DEFAULT_STATE_CAP):
    size = mdp.n_states * mdp.n_actions ** len(experts)
    if size > cap:
        raise CapacityExceeded(f'expanded space has {size} states, cap is {cap}')
    tuples, probs = [], []
    for s in range(mdp.n_states):
        supports = [np.flatnonzero(expert.probs[s] > 0) for expert in experts]
        rows = np.array(list(itertools.product(*supports)), dtype=int)
        weights = np.ones(len(rows))
        for slot, expert in enumerate(experts):
            weights *= expert.probs[s, rows[:, slot]]
        tuples.append(rows)
        probs.append(weights)
    return CandidateTable(tuples=tuples, probs=probs)


@dataclass(frozen=True)
class OracleManager:
    value: float
    state_values: np.ndarray
    action_values: np.ndarray
    residual: float

    def select(self, s, candidates):
        """Greedy expert index; ties go to the lowest index"""
        return int(np.argmax(self.action_values[s, list(candidates)]))


def oracle_manager(mdp, experts, gamma=None, tol=1e-10, cap=DEFAULT_STATE_CAP,
                   max_sweeps=1_000_000):
    """
    Value iteration on U(s) = E_c[max_j Q(s, c_j)] with
    Q(s, a) = R(s, a) + gamma sum_s' T(s'|s, a) U(s').
    """
    gamma = mdp.gamma if gamma is None else gamma
    table = enumerate_candidates(mdp, experts, cap)
    values = np.zeros(mdp.n_states)
    for sweep in range(1, max_sweeps + 1):
        q = mdp.reward + gamma * mdp.transition @ values
        backup = np.array([p @ q[s, rows].max(axis=1)
                           for s, (rows, p) in enumerate(zip(table.tuples, table.probs))])
        residual = float(np.abs(backup - values).max())
        if residual <= tol:
            break
        values = backup
    else:
        raise ConvergenceError('oracle value iteration did not converge',
                               residual=residual, iterations=max_sweeps)
    logger.debug('oracle manager converged in %d sweeps', sweep)
    q = mdp.reward + gamma * mdp.transition @ values
    return OracleManager(value=float(mdp.initial_dist @ values), state_values=values,
                         action_values=q, residual=residual)


def manager_value(mdp, experts, selector, gamma=None, cap=DEFAULT_STATE_CAP):
    """Exact expected return of a deterministic selector (s, candidates) -> j"""
    gamma = mdp.gamma if gamma is None else gamma
    table = enumerate_candidates(mdp, experts, cap)
    kernel = np.zeros((mdp.n_states, mdp.n_states))
    rewards = np.zeros(mdp.n_states)
    for s, (rows, probs) in enumerate(zip(table.tuples, table.probs)):
        for cand, p in zip(rows, probs):
            action = cand[selector(s, tuple(int(a) for a in cand))]
            kernel[s] += p * mdp.transition[s, action]
            rewards[s] += p * mdp.reward[s, action]
    values = np.linalg.solve(np.eye(mdp.n_states) - gamma * kernel, rewards)
    return float(mdp.initial_dist @ values)
