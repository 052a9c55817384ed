"""
Synthetic environments, ensembles, feasible weights and batches
"""
import logging

import numpy as np

from expert_forge.labels import LAMBDA1, LAMBDA2, compose_reward
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import FiniteMdp, TabularPolicy, sample_categorical
from mixture_qp.batch import BatchDataset, Transition
from mixture_qp.projection import project_block
from moe_policy.mixture import BaseEnsemble, MixtureWeights

logger = logging.getLogger(__name__)

SOOTHE, ASK, PROVOKE = 0, 1, 2
MOOD_ACTIONS = ('soothe', 'ask', 'provoke')


def gen_random_mdp(seed, n_states, n_actions, gamma=0.8, reward_range=(0.0, 1.0)):
    """Dirichlet(1) transition rows and start distribution, uniform rewards"""
    if n_states < 1 or n_actions < 1:
        raise ConstraintViolation('n_states and n_actions must be >= 1')
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    low, high = reward_range
    reward = rng.uniform(low, high, size=(n_states, n_actions))
    initial = rng.dirichlet(np.ones(n_states))
    return FiniteMdp(transition, reward, gamma, initial)


def mood_levels(n_levels):
    return np.linspace(-1.0, 1.0, n_levels)


def gen_mood_chain(n_levels=5, slip=0.1, gamma=0.8, initial_dist=None):
    """
    User mood chain over sentiment levels in [-1, 1].

    soothe lifts the mood one level, ask keeps it and provoke drops it;
    with probability `slip` the mood drops one level instead. Rewards
    follow compose_reward on (next level, [current level]).
    """
    if n_levels < 2:
        raise ConstraintViolation(f'n_levels must be >= 2, got {n_levels}')
    if not 0.0 <= slip < 1.0:
        raise ConstraintViolation(f'slip must lie in [0, 1), got {slip}')
    levels = mood_levels(n_levels)
    top = n_levels - 1
    transition = np.zeros((n_levels, len(MOOD_ACTIONS), n_levels))
    for s in range(n_levels):
        down = max(s - 1, 0)
        for action, shift in ((SOOTHE, 1), (ASK, 0), (PROVOKE, -1)):
            transition[s, action, min(max(s + shift, 0), top)] += 1.0 - slip
            transition[s, action, down] += slip
    rewards = np.array([[compose_reward(levels[sp], [levels[s]], LAMBDA1, LAMBDA2, gamma)
                         for sp in range(n_levels)] for s in range(n_levels)])
    reward = np.einsum('sap,sp->sa', transition, rewards)
    if initial_dist is None:
        initial_dist = np.full(n_levels, 1.0 / n_levels)
    return FiniteMdp(transition, reward, gamma, initial_dist)


def mood_chain_experts(mdp):
    """always-soothe, always-ask, and a 50/50 soothe/ask mix"""
    n_states = mdp.n_states
    mixed = np.zeros((n_states, len(MOOD_ACTIONS)))
    mixed[:, [SOOTHE, ASK]] = 0.5
    return [
        TabularPolicy.deterministic([SOOTHE] * n_states, len(MOOD_ACTIONS)),
        TabularPolicy.deterministic([ASK] * n_states, len(MOOD_ACTIONS)),
        TabularPolicy(mixed),
    ]


def gen_random_policy(seed, n_states, n_actions):
    rng = np.random.default_rng(seed)
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


def gen_random_ensemble(seed, n_states, n_actions, m, support_floor=1e-6):
    rng = np.random.default_rng(seed)
    bases = [TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states)) for _ in range(m)]
    return BaseEnsemble(bases, support_floor=support_floor)


def random_feasible_weights(ensemble, seed, scale=1.0):
    """Uniform draws projected exactly onto each state's feasible block"""
    rng = np.random.default_rng(seed)
    deviations = ensemble.deviations()
    lam = np.zeros((ensemble.n_states, ensemble.n_actions, ensemble.m - 1))
    for s in range(ensemble.n_states):
        y = rng.uniform(0.0, scale, size=(ensemble.n_actions, ensemble.m - 1))
        lam[s] = project_block(y, deviations[:, s, :].T)
    return MixtureWeights(lam)


def gen_batch(mdp, policy, n_transitions, horizon=5, seed=0, src=1):
    """Episodic rollouts from P0, restarting every `horizon` steps"""
    if n_transitions < 1:
        raise ConstraintViolation(f'n_transitions must be >= 1, got {n_transitions}')
    rng = np.random.default_rng(seed)
    cand = tuple(range(mdp.n_actions))
    transitions = []
    s, t = None, horizon
    while len(transitions) < n_transitions:
        if t >= horizon:
            s, t = int(sample_categorical(mdp.initial_dist[None, :], rng)[0]), 0
        a = int(sample_categorical(policy.probs[s][None, :], rng)[0])
        sp = int(sample_categorical(mdp.transition[s, a][None, :], rng)[0])
        transitions.append(Transition(s=s, a=a, cand=cand, r=float(mdp.reward[s, a]), sp=sp,
                                      src=src))
        s, t = sp, t + 1
    logger.debug('generated %d transitions from expert %d', len(transitions), src)
    return BatchDataset(transitions, mdp.n_states, mdp.n_actions)
