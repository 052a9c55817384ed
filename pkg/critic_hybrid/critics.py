"""
Hybrid on/off-policy critics over tabular Q functions.

The hybrid state value mixes the behavior expectation with the greedy
maximum: V(s) = (1 - mu) E_beta[Q(s, .)] + mu max_a Q(s, a).
"""
import logging
from dataclasses import dataclass

import numpy as np

from mdp_core.exceptions import ConstraintViolation, ConvergenceError
from mdp_core.tabular import TabularPolicy, q_from_values

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HybridCriticConfig:
    mu_mix: float
    behavior: TabularPolicy
    lr: float = 0.1
    tau: float = 0.05
    tol: float = 1e-10
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.mu_mix <= 1.0:
            raise ConstraintViolation(f'mu_mix must lie in [0, 1], got {self.mu_mix}')
        if not 0.0 < self.tau <= 1.0:
            raise ConstraintViolation(f'tau must lie in (0, 1], got {self.tau}')
        if self.lr <= 0:
            raise ConstraintViolation(f'lr must be positive, got {self.lr}')


@dataclass(frozen=True)
class WeightedAdvantage:
    q: np.ndarray
    v: np.ndarray
    w: np.ndarray


def hybrid_values(q, behavior, mu_mix):
    """Per-state (1 - mu) E_beta[Q] + mu max Q"""
    return (1.0 - mu_mix) * np.einsum('sa,sa->s', behavior.probs, q) + mu_mix * q.max(axis=1)


def weighted_advantage(q, behavior, mu_mix):
    values = hybrid_values(q, behavior, mu_mix)
    return WeightedAdvantage(q=q, v=values, w=q - values[:, None])


def hybrid_backup(q, mdp, cfg):
    """(T_mu q)(s, a) = R + gamma sum_s' T(s'|s, a) V_mu(s')"""
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ConstraintViolation(f'q shape {q.shape} does not match the MDP')
    return q_from_values(mdp, hybrid_values(q, cfg.behavior, cfg.mu_mix))


def hybrid_fixed_point(mdp, cfg):
    """Iterate T_mu from zero until the sup-norm change is at most tol"""
    q = np.zeros((mdp.n_states, mdp.n_actions))
    change = np.inf
    for sweep in range(1, cfg.max_sweeps + 1):
        backup = hybrid_backup(q, mdp, cfg)
        change = np.abs(backup - q).max()
        q = backup
        if change <= cfg.tol:
            logger.debug('hybrid fixed point (mu=%.2f) in %d sweeps', cfg.mu_mix, sweep)
            return weighted_advantage(q, cfg.behavior, cfg.mu_mix)
    raise ConvergenceError(f'hybrid backup did not converge in {cfg.max_sweeps} sweeps',
                           residual=float(change), iterations=cfg.max_sweeps)


def td_target(r, sp, q_target, gamma, mu_mix=0.0, behavior=None):
    """r + gamma V_mu(s') from the target table"""
    row = q_target[sp]
    expected = behavior.probs[sp] @ row if behavior is not None else row.max()
    return r + gamma * ((1.0 - mu_mix) * expected + mu_mix * row.max())


def _table_shape(batch, n_states=None, n_actions=None):
    n_states = n_states or batch.n_states or 1 + max(max(t.s, t.sp) for t in batch)
    n_actions = n_actions or batch.n_actions or 1 + max(max(t.cand) for t in batch)
    return n_states, n_actions


def hybrid_td_step(q, q_target, batch, gamma, mu_mix, behavior, lr, inner_steps=1):
    """
    Sequential TD updates of q in place over one minibatch; q_target may
    be q itself for target-free updates.
    """
    for _ in range(inner_steps):
        for item in batch:
            target = td_target(item.r, item.sp, q_target, gamma, mu_mix, behavior)
            q[item.s, item.a] += lr * item.weight * (target - q[item.s, item.a])
    return q


def sarsa_batch(batch, beta, gamma, lr=0.1, epochs=100):
    """Expected-SARSA sweeps over the batch in file order"""
    if len(batch) == 0:
        raise ConstraintViolation('sarsa_batch needs a nonempty batch')
    q = np.zeros((beta.n_states, beta.n_actions))
    for _ in range(epochs):
        hybrid_td_step(q, q, batch, gamma, 0.0, beta, lr)
    return q


def q_learning_batch(batch, gamma, lr=0.1, epochs=100, tau=0.05, batch_size=1, inner_steps=1,
                     seed=None, n_states=None, n_actions=None):
    """
    Q-learning toward r + gamma Q_target(s', argmax_a Q(s', a)); the target
    table moves by tau after every minibatch. seed=None keeps file order.
    """
    if len(batch) == 0:
        raise ConstraintViolation('q_learning_batch needs a nonempty batch')
    if not 0.0 < tau <= 1.0:
        raise ConstraintViolation(f'tau must lie in (0, 1], got {tau}')
    states, actions, rewards, next_states, weights = batch.arrays()
    q = np.zeros(_table_shape(batch, n_states, n_actions))
    q_target = q.copy()
    rng = np.random.default_rng(seed) if seed is not None else None
    for _ in range(epochs):
        order = rng.permutation(len(batch)) if rng is not None else np.arange(len(batch))
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            s, a, sp, w = states[chunk], actions[chunk], next_states[chunk], weights[chunk]
            for _ in range(inner_steps):
                greedy = q[sp].argmax(axis=1)
                targets = rewards[chunk] + gamma * q_target[sp, greedy]
                np.add.at(q, (s, a), lr * w * (targets - q[s, a]))
            q_target = tau * q + (1.0 - tau) * q_target
    return q


def weighted_advantage_blend(a_beta, a_star, mu):
    """W = (1 - mu) A_beta + mu A_star"""
    if not 0.0 <= mu <= 1.0:
        raise ConstraintViolation(f'mu must lie in [0, 1], got {mu}')
    return (1.0 - mu) * np.asarray(a_beta, dtype=float) + mu * np.asarray(a_star, dtype=float)
