"""
Batch transition datasets
"""
import json
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from rest_framework import serializers

from mdp_core.exceptions import ConstraintViolation

from .serializers import TransitionSerializer


@dataclass(frozen=True)
class Transition:
    s: int
    a: int
    cand: tuple
    r: float
    sp: int
    src: int = 1
    weight: float = 1.0

    def to_dict(self):
        row = {'s': self.s, 'a': self.a, 'cand': list(self.cand), 'r': self.r,
               'sp': self.sp, 'src': self.src}
        if self.weight != 1.0:
            row['weight'] = self.weight
        return row


class BatchDataset:
    """Ordered transitions (s, a, cand, r, s') tagged with their generating expert"""

    def __init__(self, transitions, n_states=None, n_actions=None):
        self.transitions = tuple(transitions)
        self.n_states = n_states
        self.n_actions = n_actions
        for index, item in enumerate(self.transitions):
            self._validate(index, item)

    def _validate(self, index, item):
        if item.a not in item.cand:
            raise ConstraintViolation(f'transition {index}: action {item.a} not in candidates',
                                      worst=index)
        if not math.isfinite(item.r):
            raise ConstraintViolation(f'transition {index}: reward is not finite', worst=index)
        if item.weight <= 0:
            raise ConstraintViolation(f'transition {index}: weight must be positive', worst=index)
        if self.n_states is not None and not (0 <= item.s < self.n_states
                                              and 0 <= item.sp < self.n_states):
            raise ConstraintViolation(f'transition {index}: state out of range', worst=index)
        if self.n_actions is not None and not all(0 <= a < self.n_actions for a in item.cand):
            raise ConstraintViolation(f'transition {index}: action out of range', worst=index)

    def __len__(self):
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    def __getitem__(self, index):
        return self.transitions[index]

    @property
    def total_weight(self):
        return float(sum(item.weight for item in self.transitions))

    @property
    def source(self):
        """The generating expert when the batch has a single one"""
        sources = {item.src for item in self.transitions}
        return sources.pop() if len(sources) == 1 else None

    def subset(self, indices):
        return BatchDataset([self.transitions[i] for i in indices], self.n_states, self.n_actions)

    def by_source(self):
        """Split into per-expert batches keyed by src"""
        groups = OrderedDict()
        for item in self.transitions:
            groups.setdefault(item.src, []).append(item)
        return {src: BatchDataset(items, self.n_states, self.n_actions)
                for src, items in sorted(groups.items())}

    def candidate_sets(self):
        """State -> sorted candidate tuple; duplicates must agree"""
        sets = {}
        for index, item in enumerate(self.transitions):
            cand = tuple(sorted(item.cand))
            if sets.setdefault(item.s, cand) != cand:
                raise ConstraintViolation(
                    f'transition {index}: candidate set {cand} for state {item.s} '
                    f'conflicts with {sets[item.s]}', worst=index)
        return sets

    def state_weights(self):
        """State -> summed transition weight"""
        weights = {}
        for item in self.transitions:
            weights[item.s] = weights.get(item.s, 0.0) + item.weight
        return weights

    def arrays(self):
        """Column arrays s, a, r, sp, weight"""
        return (
            np.array([item.s for item in self.transitions], dtype=int),
            np.array([item.a for item in self.transitions], dtype=int),
            np.array([item.r for item in self.transitions], dtype=float),
            np.array([item.sp for item in self.transitions], dtype=int),
            np.array([item.weight for item in self.transitions], dtype=float),
        )

    def to_jsonl(self, stream):
        for item in self.transitions:
            stream.write(json.dumps(item.to_dict()) + '\n')

    @classmethod
    def from_jsonl(cls, stream, n_states=None, n_actions=None):
        """Parse and validate one JSON object per line"""
        transitions = []
        for line_number, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            serializer = TransitionSerializer(data=json.loads(line))
            if not serializer.is_valid():
                raise serializers.ValidationError({f'line {line_number}': serializer.errors})
            row = serializer.validated_data
            transitions.append(Transition(s=row['s'], a=row['a'], cand=tuple(row['cand']),
                                          r=row['r'], sp=row['sp'], src=row['src'],
                                          weight=row['weight']))
        return cls(transitions, n_states, n_actions)
