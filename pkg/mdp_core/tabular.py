"""
Finite MDPs, tabular policies and exact evaluation primitives
"""
import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ConstraintViolation, ConvergenceError

logger = logging.getLogger(__name__)

ROW_TOL = 1e-12
REPAIR_TOL = 1e-9


def _as_stochastic(array, name):
    """Validate the last axis as probability rows, renormalizing float drift"""
    array = np.array(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ConstraintViolation(f'{name} contains non-finite entries')
    if array.min(initial=0.0) < -REPAIR_TOL:
        worst = np.unravel_index(np.argmin(array), array.shape)
        raise ConstraintViolation(
            f'{name} has negative entry {array[worst]:.3e} at {worst}', worst=worst)
    array = np.clip(array, 0.0, None)
    sums = array.sum(axis=-1, keepdims=True)
    drift = np.abs(sums - 1.0)
    if drift.max(initial=0.0) > REPAIR_TOL:
        worst = np.unravel_index(np.argmax(drift), drift.shape)[:-1]
        raise ConstraintViolation(
            f'{name} row {worst} sums to {sums[worst].item():.12f}', worst=worst)
    if drift.max(initial=0.0) > ROW_TOL:
        array = array / sums
    array.flags.writeable = False
    return array


class FiniteMdp:
    """Discounted finite MDP (S, A, T, R, gamma, P0)"""

    def __init__(self, transition, reward, gamma, initial_dist):
        transition = _as_stochastic(transition, 'transition')
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ConstraintViolation(f'transition must be (S, A, S), got {transition.shape}')
        reward = np.array(reward, dtype=float)
        if reward.shape != transition.shape[:2]:
            raise ConstraintViolation(
                f'reward shape {reward.shape} does not match {transition.shape[:2]}')
        if not np.all(np.isfinite(reward)):
            raise ConstraintViolation('reward contains non-finite entries')
        reward.flags.writeable = False
        gamma = float(gamma)
        if not 0.0 <= gamma < 1.0:
            raise ConstraintViolation(f'gamma must lie in [0, 1), got {gamma}')
        initial_dist = _as_stochastic(initial_dist, 'initial_dist')
        if initial_dist.shape != (transition.shape[0],):
            raise ConstraintViolation(f'initial_dist must have length {transition.shape[0]}')

        self.transition = transition
        self.reward = reward
        self.gamma = gamma
        self.initial_dist = initial_dist

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def to_dict(self):
        """JSON-ready document"""
        return {
            'n_states': self.n_states,
            'n_actions': self.n_actions,
            'gamma': self.gamma,
            'P0': self.initial_dist.tolist(),
            'R': self.reward.tolist(),
            'T': self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        """Build from a validated JSON document"""
        return cls(data['T'], data['R'], data['gamma'], data['P0'])

    def __repr__(self):
        return f'FiniteMdp(n_states={self.n_states}, n_actions={self.n_actions}, gamma={self.gamma})'


class TabularPolicy:
    """Per-state action distributions pi(a|s)"""

    def __init__(self, probs):
        probs = _as_stochastic(probs, 'policy')
        if probs.ndim != 2:
            raise ConstraintViolation(f'policy must be (S, A), got {probs.shape}')
        self.probs = probs

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        """One-hot policy from a per-state action list"""
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    def to_dict(self):
        return {'probs': self.probs.tolist()}

    def __eq__(self, other):
        return isinstance(other, TabularPolicy) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f'TabularPolicy(n_states={self.n_states}, n_actions={self.n_actions})'


@dataclass(frozen=True)
class OccupancyMeasure:
    """Normalized discounted state visitation d(s) and its anchor"""
    d: np.ndarray
    anchor: object = None

    def state_action(self, policy):
        """d(s, a) = d(s) pi(a|s)"""
        return self.d[:, None] * policy.probs


def _check_shapes(mdp, policy):
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ConstraintViolation(
            f'policy shape {policy.probs.shape} does not match MDP '
            f'({mdp.n_states}, {mdp.n_actions})')


def policy_transition(mdp, policy):
    """State-to-state kernel P_pi(s'|s)"""
    _check_shapes(mdp, policy)
    return np.einsum('sa,sat->st', policy.probs, mdp.transition)


def policy_reward(mdp, policy):
    """Expected one-step reward r_pi(s)"""
    _check_shapes(mdp, policy)
    return np.einsum('sa,sa->s', policy.probs, mdp.reward)


def resolvent_solve(mdp, kernel, rhs):
    """Solve (I - gamma * kernel) x = rhs"""
    system = np.eye(mdp.n_states) - mdp.gamma * kernel
    return np.linalg.solve(system, rhs)


def policy_value(mdp, policy):
    """Exact V_pi from one LU solve"""
    kernel = policy_transition(mdp, policy)
    rewards = policy_reward(mdp, policy)
    values = resolvent_solve(mdp, kernel, rewards)
    residual = np.abs(values - mdp.gamma * kernel @ values - rewards).max()
    if residual > 1e-10 * max(1.0, np.abs(values).max()):
        logger.warning('policy_value residual %.3e above tolerance', residual)
    return values


def q_from_values(mdp, values):
    """Q(s, a) = R(s, a) + gamma * sum_s' T(s'|s, a) V(s')"""
    return mdp.reward + mdp.gamma * mdp.transition @ values


def policy_q(mdp, policy):
    return q_from_values(mdp, policy_value(mdp, policy))


def advantage(mdp, policy):
    """A_pi = Q_pi - V_pi"""
    values = policy_value(mdp, policy)
    return q_from_values(mdp, values) - values[:, None]


def occupancy(mdp, policy, anchor=None):
    """
    Discounted state occupancy d = (1 - gamma) e^T (I - gamma P_pi)^-1.

    anchor is a state index, or None for the initial distribution P0.
    """
    if anchor is None:
        start = mdp.initial_dist
    else:
        anchor = int(anchor)
        if not 0 <= anchor < mdp.n_states:
            raise ConstraintViolation(f'anchor state {anchor} out of range')
        start = np.zeros(mdp.n_states)
        start[anchor] = 1.0
    kernel = policy_transition(mdp, policy)
    d = (1.0 - mdp.gamma) * resolvent_solve(mdp, kernel.T, start)
    d = np.clip(d, 0.0, None)
    return OccupancyMeasure(d=d / d.sum(), anchor=anchor)


def occupancy_from_each_state(mdp, policy):
    """Row s0 holds d(.|s0); rows sum to one"""
    kernel = policy_transition(mdp, policy)
    rows = (1.0 - mdp.gamma) * np.linalg.inv(np.eye(mdp.n_states) - mdp.gamma * kernel)
    rows = np.clip(rows, 0.0, None)
    return rows / rows.sum(axis=1, keepdims=True)


def bellman_residual(mdp, q):
    """Sup-norm residual of the optimal Bellman operator at q"""
    backup = q_from_values(mdp, q.max(axis=1))
    return float(np.abs(backup - q).max())


def value_iteration(mdp, tol, max_sweeps=1_000_000):
    """Q iteration to residual <= tol; greedy ties go to the lowest action"""
    if tol <= 0:
        raise ConstraintViolation(f'tol must be positive, got {tol}')
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for sweep in range(1, max_sweeps + 1):
        backup = q_from_values(mdp, q.max(axis=1))
        residual = np.abs(backup - q).max()
        if residual <= tol:
            break
        q = backup
    else:
        raise ConvergenceError('value iteration did not converge', residual=residual,
                               iterations=max_sweeps)
    logger.debug('value iteration converged in %d sweeps (residual %.3e)', sweep, residual)
    return q, TabularPolicy.deterministic(q.argmax(axis=1), mdp.n_actions)


def expected_return(mdp, policy):
    """J_pi = sum_s P0(s) V_pi(s)"""
    return float(mdp.initial_dist @ policy_value(mdp, policy))


def sample_categorical(probs, rng):
    """One draw per row of a (N, K) probability array"""
    cdf = np.cumsum(probs, axis=1)
    draws = (cdf < rng.random(len(probs))[:, None] * cdf[:, -1:]).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)


def monte_carlo_return(mdp, policy, n_episodes, horizon, seed):
    """Mean and standard error of the truncated discounted return"""
    _check_shapes(mdp, policy)
    rng = np.random.default_rng(seed)
    states = sample_categorical(np.broadcast_to(mdp.initial_dist, (n_episodes, mdp.n_states)), rng)
    returns = np.zeros(n_episodes)
    discount = 1.0
    for _ in range(horizon):
        actions = sample_categorical(policy.probs[states], rng)
        returns += discount * mdp.reward[states, actions]
        states = sample_categorical(mdp.transition[states, actions], rng)
        discount *= mdp.gamma
    return float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(n_episodes))
