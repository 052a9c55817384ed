"""
Manager learners on the MoE-MDP: online DQN, offline CQL and model-based RL
"""
import logging

import numpy as np

from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import FiniteMdp

from .moe_env import DEFAULT_HORIZON, MoeEnv, collect_manager_batch

logger = logging.getLogger(__name__)


class ManagerQ:
    """
    Q(s_bar, j) stored per (state, sorted candidate multiset) as one value
    per underlying action; slot j reads the entry of its candidate action.
    """

    def __init__(self, n_actions):
        self.n_actions = n_actions
        self.rows = {}

    @staticmethod
    def key(s, candidates):
        return int(s), tuple(sorted(int(a) for a in candidates))

    def row(self, s, candidates):
        key = self.key(s, candidates)
        if key not in self.rows:
            self.rows[key] = np.zeros(self.n_actions)
        return self.rows[key]

    def values(self, s, candidates):
        """Q over expert slots 0..m"""
        row = self.rows.get(self.key(s, candidates))
        if row is None:
            return np.zeros(len(candidates))
        return row[list(candidates)]

    def greedy(self, s, candidates):
        return int(np.argmax(self.values(s, candidates)))

    def policy(self, s, candidates):
        """Softmax over slot values"""
        values = self.values(s, candidates)
        weights = np.exp(values - values.max())
        return weights / weights.sum()

    def copy(self):
        clone = ManagerQ(self.n_actions)
        clone.rows = {key: row.copy() for key, row in self.rows.items()}
        return clone

    def blend_from(self, online, tau):
        """self <- tau * online + (1 - tau) * self"""
        for key, row in online.rows.items():
            current = self.rows.get(key)
            if current is None:
                current = np.zeros(self.n_actions)
            self.rows[key] = tau * row + (1.0 - tau) * current

    def snapshot(self):
        return {key: row.copy() for key, row in sorted(self.rows.items())}

    def __len__(self):
        return len(self.rows)


def greedy_selector(manager_q):
    return manager_q.greedy


def _bootstrap(q, q_target, sp, cand_next):
    """Q_target(s', argmax_j Q(s', j))"""
    j = q.greedy(sp, cand_next)
    return q_target.values(sp, cand_next)[j]


def _epsilon(schedule, episode, episodes):
    start, end = schedule
    if episodes <= 1:
        return end
    return start + (end - start) * episode / (episodes - 1)


def dqn_manager(env, episodes, gamma=0.8, lr=0.1, tau=0.05, epsilon_schedule=(1.0, 0.05),
                seed=0, callback=None):
    """
    Epsilon-greedy online Q-learning with a soft-updated target table;
    callback(episode, q) runs after every episode.
    """
    rng = np.random.default_rng(seed)
    q = ManagerQ(env.mdp.n_actions)
    q_target = ManagerQ(env.mdp.n_actions)
    for episode in range(episodes):
        epsilon = _epsilon(epsilon_schedule, episode, episodes)
        state, done = env.reset(), False
        while not done:
            s, cand = state.env_state, state.candidates
            if rng.random() < epsilon:
                j = int(rng.integers(env.n_experts))
            else:
                j = q.greedy(s, cand)
            state, reward, done = env.step(j)
            target = reward + gamma * _bootstrap(q, q_target, state.env_state, state.candidates)
            row = q.row(s, cand)
            row[cand[j]] += lr * (target - row[cand[j]])
            q_target.blend_from(q, tau)
        if callback is not None:
            callback(episode + 1, q)
    logger.info('dqn manager trained for %d episodes (%d table rows)', episodes, len(q))
    return q


def cql_gap(q, batch):
    """Mean over transitions of E_softmax[Q] - Q(s_bar, expert 0)"""
    gaps = []
    for item in batch:
        values = q.values(item.s, item.cand)
        gaps.append(q.policy(item.s, item.cand) @ values - values[0])
    return float(np.mean(gaps)) if gaps else 0.0


def batch_bellman_residual(q, batch, gamma):
    """Mean |r + gamma max_j' Q(s_bar', j') - Q(s_bar, j)| over the batch"""
    errors = [abs(item.r + gamma * q.values(item.sp, item.cand_next).max()
                  - q.values(item.s, item.cand)[item.j]) for item in batch]
    return float(np.mean(errors)) if errors else 0.0


def _fit_offline(batch, alpha, gamma, lr, tau, steps, batch_size, seed, n_actions,
                 callback=None):
    """Minibatch gradient steps on TD^2 / 2 + alpha (E_mu[Q] - Q(s_bar, 0)), mu = softmax Q"""
    if alpha < 0:
        raise ConstraintViolation(f'alpha must be >= 0, got {alpha}')
    if n_actions is None:
        n_actions = 1 + max(max(max(t.cand), max(t.cand_next)) for t in batch)
    rng = np.random.default_rng(seed)
    q = ManagerQ(n_actions)
    q_target = ManagerQ(n_actions)
    size = min(batch_size, len(batch))
    for step in range(1, steps + 1):
        chunk = rng.choice(len(batch), size=size, replace=False)
        grads = {}
        for k in chunk:
            item = batch[k]
            values = q.row(item.s, item.cand)[list(item.cand)]
            target = item.r + gamma * _bootstrap(q, q_target, item.sp, item.cand_next)
            grad = grads.setdefault(ManagerQ.key(item.s, item.cand), np.zeros(n_actions))
            grad[item.cand[item.j]] += values[item.j] - target
            mu = q.policy(item.s, item.cand)
            for slot, action in enumerate(item.cand):
                grad[action] += alpha * mu[slot]
            grad[item.cand[0]] += alpha * -1.0
        for key, grad in grads.items():
            q.rows[key] = q.rows[key] - lr * grad / size
        q_target.blend_from(q, tau)
        if callback is not None:
            callback(step, q)
    return q


def offline_q_manager(batch, gamma=0.8, lr=0.1, tau=0.05, steps=1000, batch_size=32, seed=0,
                      n_actions=None, callback=None):
    """DQN-style batch updates on logged MoE-MDP transitions"""
    return _fit_offline(batch, 0.0, gamma, lr, tau, steps, batch_size, seed, n_actions,
                        callback=callback)


def cql_manager(batch, alpha, gamma=0.8, lr=0.1, tau=0.05, steps=1000, batch_size=32, seed=0,
                n_actions=None, callback=None):
    """Conservative Q-learning anchored on the primitive's candidate (slot 0)"""
    q = _fit_offline(batch, alpha, gamma, lr, tau, steps, batch_size, seed, n_actions,
                     callback=callback)
    logger.info('cql manager (alpha=%g) gap %.4f', alpha, cql_gap(q, batch))
    return q


def fit_user_model(batch, n_states, n_actions, gamma=0.8, smoothing=1.0):
    """
    Empirical model from weighted counts: T(s'|s,a) with `smoothing` added
    to every next state, mean rewards, and start states from visit shares.
    Pairs with no data and no smoothing fall back to a uniform row.
    """
    counts = np.zeros((n_states, n_actions, n_states))
    reward_sum = np.zeros((n_states, n_actions))
    visits = np.zeros(n_states)
    for item in batch:
        counts[item.s, item.a, item.sp] += item.weight
        reward_sum[item.s, item.a] += item.weight * item.r
        visits[item.s] += item.weight
    totals = counts.sum(axis=2)
    smoothed = counts + smoothing
    sums = smoothed.sum(axis=2, keepdims=True)
    transition = np.where(sums > 0, smoothed / np.where(sums > 0, sums, 1.0), 1.0 / n_states)
    reward = np.where(totals > 0, reward_sum / np.where(totals > 0, totals, 1.0), 0.0)
    start = visits / visits.sum() if visits.sum() > 0 else np.full(n_states, 1.0 / n_states)
    return FiniteMdp(transition, reward, gamma, start)


def _fitted_q_iteration(batch, gamma, lr, sweeps, n_actions, callback=None):
    """
    Fitted Q-iteration: each sweep moves every logged (s_bar, j) entry a step
    lr towards the mean of its Q-learning targets r + gamma max_j' Q(s_bar', j')
    over the whole batch. lr = 1 is plain synchronous value iteration on
    the empirical transitions.
    """
    q = ManagerQ(n_actions)
    for item in batch:
        q.row(item.s, item.cand)
    for sweep in range(1, sweeps + 1):
        sums, counts = {}, {}
        for item in batch:
            entry = (ManagerQ.key(item.s, item.cand), item.cand[item.j])
            target = item.r + gamma * q.values(item.sp, item.cand_next).max()
            sums[entry] = sums.get(entry, 0.0) + target
            counts[entry] = counts.get(entry, 0) + 1
        for (key, action), total in sums.items():
            row = q.rows[key]
            row[action] += lr * (total / counts[(key, action)] - row[action])
        if callback is not None:
            callback(sweep, q)
    return q


def mbrl_manager(batch, experts, rollout_budget, gamma=0.8, lr=0.5, seed=0,
                 horizon=DEFAULT_HORIZON, sweeps=200, smoothing=1.0, callback=None):
    """
    Learn a user model from base transitions, roll the MoE-MDP out in it
    under a random manager, then fit Q on the synthetic transitions by
    fitted Q-iteration; callback(sweep, q) runs after every sweep.
    """
    n_states, n_actions = experts[0].n_states, experts[0].n_actions
    if rollout_budget <= 0:
        return ManagerQ(n_actions)
    model = fit_user_model(batch, n_states, n_actions, gamma=gamma, smoothing=smoothing)
    env = MoeEnv(model, experts, seed=seed, horizon=horizon)
    synthetic = collect_manager_batch(env, rollout_budget, seed=seed)
    q = _fitted_q_iteration(synthetic, gamma, lr, sweeps, n_actions, callback=callback)
    logger.info('mbrl manager fitted on %d synthetic transitions (%d table rows)',
                len(synthetic), len(q))
    return q
