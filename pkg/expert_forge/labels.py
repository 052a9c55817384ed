"""
Label and reward functions that characterize an expert's intent
"""
from dataclasses import dataclass, field

import numpy as np

from mdp_core.exceptions import ConstraintViolation

QUESTION_WORDS = frozenset({'what', 'why', 'how', 'who', 'when', 'where'})
QUESTION_MARK = '?'

# pos, neg, joy, optimism, sadness, anger
SENTIMENT_COEFFICIENTS = np.array([0.5, -0.5, 0.5, 1.0, -1.0, -0.5])

LAMBDA1 = 0.75
LAMBDA2 = 0.25

LABEL_KINDS = ('question', 'sentiment-combine', 'sentiment-coherence', 'exploration', 'custom')


def question_label(tokens, question_words=QUESTION_WORDS):
    """1 when a question word and the question mark are both present"""
    tokens = [str(token).lower() for token in tokens]
    has_word = any(token in question_words for token in tokens)
    return int(has_word and QUESTION_MARK in tokens)


def sentiment_combine(scores):
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (6,):
        raise ConstraintViolation(f'sentiment scores must be a 6-vector, got {scores.shape}')
    if not np.all(np.isfinite(scores)):
        raise ConstraintViolation('sentiment scores must be finite')
    return float(scores @ SENTIMENT_COEFFICIENTS)


def cosine_labels(context_feat, utter_feat):
    """(coherence, exploration) = (cos, -cos); a zero vector scores 0"""
    u = np.asarray(context_feat, dtype=float)
    v = np.asarray(utter_feat, dtype=float)
    norm = np.linalg.norm(u) * np.linalg.norm(v)
    if norm == 0:
        return 0.0, 0.0
    cosine = float(np.clip(u @ v / norm, -1.0, 1.0))
    return cosine, -cosine


def compose_reward(sent_next, sent_history, lambda1=LAMBDA1, lambda2=LAMBDA2, gamma=0.8):
    """
    lambda1 l(X+) + lambda2 (l(X+) - discounted mean of the history),
    with history[l] weighted by gamma^l (1 - gamma) / (1 - gamma^L).
    """
    history = np.asarray(sent_history, dtype=float)
    if history.size == 0:
        raise ConstraintViolation('sentiment history must be nonempty')
    if not 0.0 < gamma < 1.0:
        raise ConstraintViolation(f'gamma must lie in (0, 1), got {gamma}')
    length = len(history)
    weights = gamma ** np.arange(length) * (1.0 - gamma) / (1.0 - gamma ** length)
    return float(lambda1 * sent_next + lambda2 * (sent_next - weights @ history))


@dataclass(frozen=True)
class LabelFunction:
    """
    A label over decoder outputs, dispatched on `kind`:

    - question: params['vocabulary'][y] is the token list of output y
    - sentiment-combine: params['scores'][y] is output y's 6-vector
    - sentiment-coherence / exploration: params['context'] against params['features'][y]
    - custom: params['values'][y]
    """
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise ConstraintViolation(f'unknown label kind {self.kind!r}')

    def __call__(self, y):
        y = int(y)
        if self.kind == 'question':
            words = self.params.get('question_words', QUESTION_WORDS)
            return float(question_label(self.params['vocabulary'][y], frozenset(words)))
        if self.kind == 'sentiment-combine':
            return sentiment_combine(self.params['scores'][y])
        if self.kind in ('sentiment-coherence', 'exploration'):
            coherence, exploration = cosine_labels(self.params['context'],
                                                   self.params['features'][y])
            return coherence if self.kind == 'sentiment-coherence' else exploration
        return float(self.params['values'][y])
