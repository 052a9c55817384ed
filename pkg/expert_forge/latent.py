"""
Toy-scale latent experts: diagonal Gaussians over a fixed softmax decoder.

Contexts are discrete indices; an expert is one Gaussian per context and
the decoder maps a latent vector to a distribution over a finite set of
outputs.
"""
import itertools
import logging

import numpy as np

from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import TabularPolicy

logger = logging.getLogger(__name__)

SIGMA_MIN = 1e-3
QUADRATURE_NODES = 40


def _softmax(logits):
    logits = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=-1, keepdims=True)


class ToyDecoder:
    """Psi(y|z) = softmax(weight z)"""

    def __init__(self, weight):
        self.weight = np.asarray(weight, dtype=float)
        if self.weight.ndim != 2:
            raise ConstraintViolation('decoder weight must be an (outputs, d) matrix')

    @property
    def outputs(self):
        return self.weight.shape[0]

    @property
    def d(self):
        return self.weight.shape[1]

    def probs(self, z):
        """Output distribution for one latent (d,) or a stack (..., d)"""
        return _softmax(np.asarray(z, dtype=float) @ self.weight.T)

    def sample(self, z, rng):
        """One output per latent row by inverse CDF"""
        probs = np.atleast_2d(self.probs(z))
        draws = rng.random(len(probs))[:, None]
        return np.minimum((probs.cumsum(axis=1) < draws).sum(axis=1), self.outputs - 1)


def _check_std(std, sigma_min, name):
    if np.any(std < sigma_min):
        raise ConstraintViolation(f'{name} std below sigma_min={sigma_min}')


class GaussianLatent:
    """Per-context N(mean_c, diag(std_c^2)) with std >= sigma_min"""

    def __init__(self, mean, std, sigma_min=SIGMA_MIN):
        self.mean = np.array(mean, dtype=float, ndmin=2)
        self.std = np.array(std, dtype=float, ndmin=2)
        self.sigma_min = sigma_min
        if self.mean.shape != self.std.shape:
            raise ConstraintViolation(f'mean {self.mean.shape} and std {self.std.shape} differ')
        _check_std(self.std, sigma_min, 'latent')

    @classmethod
    def standard(cls, contexts, d, sigma_min=SIGMA_MIN):
        return cls(np.zeros((contexts, d)), np.ones((contexts, d)), sigma_min=sigma_min)

    @property
    def contexts(self):
        return self.mean.shape[0]

    @property
    def d(self):
        return self.mean.shape[1]

    def sample(self, context, n, rng):
        return self.mean[context] + self.std[context] * rng.standard_normal((n, self.d))

    def log_density(self, z, context):
        mean, std = self.mean[context], self.std[context]
        return float(np.sum(-0.5 * ((z - mean) / std) ** 2 - np.log(std)
                            - 0.5 * np.log(2 * np.pi)))

    def copy(self):
        return GaussianLatent(self.mean.copy(), self.std.copy(), sigma_min=self.sigma_min)

    def to_dict(self):
        return {'contexts': self.contexts, 'd': self.d, 'mean': self.mean.tolist(),
                'std': self.std.tolist()}

    @classmethod
    def from_dict(cls, data, sigma_min=SIGMA_MIN):
        return cls(data['mean'], data['std'], sigma_min=sigma_min)

    def __repr__(self):
        return f'GaussianLatent(contexts={self.contexts}, d={self.d})'


class PosteriorModel:
    """Per-(context, target) Gaussian parameters, shapes (contexts, targets, d)"""

    def __init__(self, mean, std, sigma_min=SIGMA_MIN):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)
        self.sigma_min = sigma_min
        if self.mean.ndim != 3 or self.mean.shape != self.std.shape:
            raise ConstraintViolation('posterior mean and std must share a (contexts, targets, d) shape')
        _check_std(self.std, sigma_min, 'posterior')

    @classmethod
    def standard(cls, contexts, targets, d, sigma_min=SIGMA_MIN):
        return cls(np.zeros((contexts, targets, d)), np.ones((contexts, targets, d)),
                   sigma_min=sigma_min)

    def params(self, context, target):
        return self.mean[context, target], self.std[context, target]

    def copy(self):
        return PosteriorModel(self.mean.copy(), self.std.copy(), sigma_min=self.sigma_min)


def score_gradient(z_prime, mean, std):
    """Gradient of log N(z'; mean, std^2) with respect to (mean, std)"""
    diff = np.asarray(z_prime, dtype=float) - mean
    return diff / std ** 2, (diff ** 2 - std ** 2) / std ** 3


def reinforce_gradient(g, decoder, context, label, n_samples, rng, baseline=True):
    """
    Monte-Carlo estimate of grad E[l(Y)] at one context; the baseline is
    the mean label of a fresh, independent set of samples.
    Returns (grad_mean, grad_std, mean_label).
    """
    if n_samples < 2:
        raise ConstraintViolation(f'n_samples must be >= 2, got {n_samples}')
    z = g.sample(context, n_samples, rng)
    labels = np.array([label(y) for y in decoder.sample(z, rng)], dtype=float)
    offset = 0.0
    if baseline:
        fresh = decoder.sample(g.sample(context, n_samples, rng), rng)
        offset = float(np.mean([label(y) for y in fresh]))
    grad_mean, grad_std = score_gradient(z, g.mean[context], g.std[context])
    centred = (labels - offset)[:, None]
    return (centred * grad_mean).mean(axis=0), (centred * grad_std).mean(axis=0), labels.mean()


def reinforce_step(g, decoder, contexts, label, n_samples, lr, seed, baseline=True):
    """
    One ascent step per context; returns the updated latent and the mean label.
    lr = 0 is allowed and leaves the parameters unchanged.
    """
    if lr < 0:
        raise ConstraintViolation(f'lr must be >= 0, got {lr}')
    rng = np.random.default_rng(seed)
    updated = g.copy()
    rewards = []
    for context in contexts:
        grad_mean, grad_std, reward = reinforce_gradient(g, decoder, context, label, n_samples,
                                                         rng, baseline=baseline)
        updated.mean[context] += lr * grad_mean
        updated.std[context] = np.maximum(updated.std[context] + lr * grad_std, g.sigma_min)
        rewards.append(reward)
    return updated, float(np.mean(rewards))


def gaussian_kl(p, q):
    """KL(N(p) || N(q)) for diagonal Gaussians given as (mean, std) pairs"""
    mean_p, std_p = (np.asarray(x, dtype=float) for x in p)
    mean_q, std_q = (np.asarray(x, dtype=float) for x in q)
    terms = (np.log(std_q / std_p) + (std_p ** 2 + (mean_p - mean_q) ** 2) / (2 * std_q ** 2)
             - 0.5)
    return float(np.sum(terms))


def _pair_index(corpus):
    pairs = [(int(c), int(y)) for c, y in corpus]
    if not pairs:
        raise ConstraintViolation('corpus must be nonempty')
    return pairs


def primitive_loss_and_grad(rho, g0, decoder, corpus, beta_kl, noise):
    """
    Mean over corpus pairs of E_eps[-log Psi(y | mu_rho + sigma_rho eps)]
    + beta KL(rho(c, y) || G0(c)) with fixed noise (pairs, samples, d).

    Returns (loss, grads) where grads holds arrays shaped like
    rho.mean, rho.std, g0.mean and g0.std.
    """
    pairs = _pair_index(corpus)
    noise = np.asarray(noise, dtype=float)
    grads = {'rho_mean': np.zeros_like(rho.mean), 'rho_std': np.zeros_like(rho.std),
             'g0_mean': np.zeros_like(g0.mean), 'g0_std': np.zeros_like(g0.std)}
    scale = 1.0 / len(pairs)
    loss = 0.0
    for k, (c, y) in enumerate(pairs):
        mean, std = rho.params(c, y)
        eps = noise[k]
        z = mean + std * eps
        probs = decoder.probs(z)
        loss += scale * float(np.mean(-np.log(probs[:, y])))
        # d(-log Psi(y|z))/dz = W'(p - e_y)
        residual = probs.copy()
        residual[:, y] -= 1.0
        dz = residual @ decoder.weight
        grads['rho_mean'][c, y] += scale * dz.mean(axis=0)
        grads['rho_std'][c, y] += scale * (dz * eps).mean(axis=0)

        mean0, std0 = g0.mean[c], g0.std[c]
        loss += scale * beta_kl * gaussian_kl((mean, std), (mean0, std0))
        shift = mean - mean0
        grads['rho_mean'][c, y] += scale * beta_kl * shift / std0 ** 2
        grads['g0_mean'][c] -= scale * beta_kl * shift / std0 ** 2
        grads['rho_std'][c, y] += scale * beta_kl * (std / std0 ** 2 - 1.0 / std)
        grads['g0_std'][c] += scale * beta_kl * (1.0 / std0 - (std ** 2 + shift ** 2) / std0 ** 3)
    return loss, grads


def fit_primitive(rho, g0, decoder, corpus, beta_kl, lr, steps, seed, n_samples=16):
    """Gradient descent on the penalized reconstruction objective; returns (rho, g0, trace)"""
    if beta_kl < 0:
        raise ConstraintViolation(f'beta_kl must be >= 0, got {beta_kl}')
    pairs = _pair_index(corpus)
    rng = np.random.default_rng(seed)
    rho, g0 = rho.copy(), g0.copy()
    trace = []
    for _ in range(steps):
        noise = rng.standard_normal((len(pairs), n_samples, decoder.d))
        loss, grads = primitive_loss_and_grad(rho, g0, decoder, pairs, beta_kl, noise)
        trace.append(loss)
        rho.mean -= lr * grads['rho_mean']
        rho.std = np.maximum(rho.std - lr * grads['rho_std'], rho.sigma_min)
        g0.mean -= lr * grads['g0_mean']
        g0.std = np.maximum(g0.std - lr * grads['g0_std'], g0.sigma_min)
    if trace:
        logger.info('primitive fit: loss %.4f -> %.4f over %d steps', trace[0], trace[-1], steps)
    return rho, g0, trace


def _quadrature(d, n_nodes):
    """Probabilists' Gauss-Hermite grid over R^d: (nodes (k, d), weights (k,))"""
    x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    w = w / np.sqrt(2 * np.pi)
    nodes = np.array(list(itertools.product(x, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return nodes, weights


def output_distribution(g, decoder, context, n_nodes=QUADRATURE_NODES):
    """E_{z ~ G(context)}[Psi(. | z)] by quadrature"""
    nodes, weights = _quadrature(g.d, n_nodes)
    z = g.mean[context] + g.std[context] * nodes
    return weights @ decoder.probs(z)


def expected_label(g, decoder, context, label, n_nodes=QUADRATURE_NODES):
    """Exact (to quadrature error) mean label of the expert at one context"""
    values = np.array([label(y) for y in range(decoder.outputs)], dtype=float)
    return float(output_distribution(g, decoder, context, n_nodes) @ values)


def latent_policy(g, decoder, seed=None, n_samples=None):
    """
    The tabular policy an expert induces over decoder outputs, one row per
    context; quadrature by default, Monte Carlo when n_samples is given.
    """
    if n_samples is None:
        rows = [output_distribution(g, decoder, c) for c in range(g.contexts)]
    else:
        rng = np.random.default_rng(seed)
        rows = [decoder.probs(g.sample(c, n_samples, rng)).mean(axis=0)
                for c in range(g.contexts)]
    rows = np.array(rows)
    return TabularPolicy(rows / rows.sum(axis=1, keepdims=True))
