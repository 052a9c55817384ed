"""
The MoE-MDP: environment state plus one sampled candidate per expert,
with expert indices as actions
"""
import json
import logging
from dataclasses import dataclass

import numpy as np
from rest_framework import serializers

from mdp_core.exceptions import ConstraintViolation

from .serializers import ManagerTransitionSerializer

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 5


@dataclass(frozen=True)
class MoeMdpState:
    env_state: int
    candidates: tuple


def draw(probs, rng):
    """Inverse-CDF draw from one probability row"""
    index = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side='right'))
    return min(index, len(probs) - 1)


class MoeEnv:
    """Episodic MoE-MDP over a FiniteMdp and experts 0..m"""

    def __init__(self, mdp, experts, seed=None, horizon=DEFAULT_HORIZON):
        experts = list(experts)
        if not experts:
            raise ConstraintViolation('the MoE-MDP needs at least one expert')
        for index, expert in enumerate(experts):
            if expert.probs.shape != (mdp.n_states, mdp.n_actions):
                raise ConstraintViolation(f'expert {index} does not match the MDP shape')
        self.mdp = mdp
        self.experts = experts
        self.horizon = horizon
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.t = 0

    @property
    def n_experts(self):
        return len(self.experts)

    def sample_candidates(self, s):
        return tuple(draw(expert.probs[s], self.rng) for expert in self.experts)

    def reset(self):
        s = draw(self.mdp.initial_dist, self.rng)
        self.state = MoeMdpState(env_state=s, candidates=self.sample_candidates(s))
        self.t = 0
        return self.state

    def step(self, j):
        """Execute expert j's candidate; returns (next state, reward, done)"""
        if not 0 <= j < self.n_experts:
            raise ConstraintViolation(f'expert index {j} outside 0..{self.n_experts - 1}')
        if self.state is None:
            raise ConstraintViolation('call reset() before step()')
        s, action = self.state.env_state, self.state.candidates[j]
        reward = float(self.mdp.reward[s, action])
        sp = draw(self.mdp.transition[s, action], self.rng)
        self.state = MoeMdpState(env_state=sp, candidates=self.sample_candidates(sp))
        self.t += 1
        return self.state, reward, self.t >= self.horizon


def build_moe_env(mdp, experts, seed=None, horizon=DEFAULT_HORIZON):
    return MoeEnv(mdp, experts, seed=seed, horizon=horizon)


@dataclass(frozen=True)
class ManagerTransition:
    s: int
    cand: tuple
    j: int
    r: float
    sp: int
    cand_next: tuple

    def to_dict(self):
        return {'s': self.s, 'cand': list(self.cand), 'j': self.j, 'r': self.r,
                'sp': self.sp, 'cand_next': list(self.cand_next)}


class ManagerBatch:
    """MoE-MDP transitions (s_bar, j, r, s_bar')"""

    def __init__(self, transitions):
        self.transitions = tuple(transitions)
        for index, item in enumerate(self.transitions):
            if not 0 <= item.j < len(item.cand) or len(item.cand) != len(item.cand_next):
                raise ConstraintViolation(f'manager transition {index} is malformed',
                                          worst=index)

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    def __getitem__(self, index):
        return self.transitions[index]

    def to_jsonl(self, stream):
        for item in self.transitions:
            stream.write(json.dumps(item.to_dict()) + '\n')

    @classmethod
    def from_jsonl(cls, stream):
        transitions = []
        for line_number, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            serializer = ManagerTransitionSerializer(data=json.loads(line))
            if not serializer.is_valid():
                raise serializers.ValidationError({f'line {line_number}': serializer.errors})
            row = serializer.validated_data
            transitions.append(ManagerTransition(
                s=row['s'], cand=tuple(row['cand']), j=row['j'], r=row['r'], sp=row['sp'],
                cand_next=tuple(row['cand_next'])))
        return cls(transitions)


def collect_manager_batch(env, n_transitions, seed=None):
    """Transitions gathered under a uniformly random manager"""
    rng = np.random.default_rng(seed)
    transitions = []
    state = env.reset()
    while len(transitions) < n_transitions:
        j = int(rng.integers(env.n_experts))
        next_state, reward, done = env.step(j)
        transitions.append(ManagerTransition(
            s=state.env_state, cand=state.candidates, j=j, r=reward,
            sp=next_state.env_state, cand_next=next_state.candidates))
        state = env.reset() if done else next_state
    logger.debug('collected %d manager transitions', len(transitions))
    return ManagerBatch(transitions)
