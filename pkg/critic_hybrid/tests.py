import numpy as np
from django.test import SimpleTestCase

from harness.generators import gen_random_mdp, gen_random_policy
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import FiniteMdp, TabularPolicy, policy_q, value_iteration
from mixture_qp.batch import BatchDataset, Transition

from .critics import (
    HybridCriticConfig,
    hybrid_backup,
    hybrid_fixed_point,
    hybrid_td_step,
    q_learning_batch,
    sarsa_batch,
    weighted_advantage,
    weighted_advantage_blend,
)


def self_loop_batch():
    return BatchDataset([Transition(s=0, a=0, cand=(0,), r=1.0, sp=0)], 1, 1)


def exhaustive_batch(mdp):
    """Every (s, a, s') once, weighted by its transition probability"""
    transitions = [
        Transition(s=s, a=a, cand=tuple(range(mdp.n_actions)), r=float(mdp.reward[s, a]),
                   sp=sp, weight=float(mdp.transition[s, a, sp]))
        for s in range(mdp.n_states) for a in range(mdp.n_actions)
        for sp in range(mdp.n_states) if mdp.transition[s, a, sp] > 0
    ]
    return BatchDataset(transitions, mdp.n_states, mdp.n_actions)


class BatchCriticTests(SimpleTestCase):

    def test_sarsa_self_loop(self):
        q = sarsa_batch(self_loop_batch(), TabularPolicy([[1.0]]), 0.5, lr=0.5, epochs=200)
        self.assertAlmostEqual(q[0, 0], 2.0, places=10)

    def test_q_learning_self_loop(self):
        q = q_learning_batch(self_loop_batch(), 0.5, lr=0.5, epochs=200, tau=1.0)
        self.assertAlmostEqual(q[0, 0], 2.0, places=10)

    def test_zero_learning_rate_keeps_zero_table(self):
        batch = exhaustive_batch(gen_random_mdp(0, 3, 2))
        np.testing.assert_array_equal(sarsa_batch(batch, gen_random_policy(1, 3, 2), 0.8, lr=0.0,
                                                  epochs=3), 0.0)

    def test_empty_batch_rejected(self):
        with self.assertRaises(ConstraintViolation):
            sarsa_batch(BatchDataset([]), TabularPolicy([[1.0]]), 0.5)
        with self.assertRaises(ConstraintViolation):
            q_learning_batch(BatchDataset([]), 0.5)

    def test_sarsa_on_exhaustive_batch_approaches_policy_q(self):
        mdp = gen_random_mdp(2, 3, 2, gamma=0.8)
        beta = gen_random_policy(3, 3, 2)
        q = sarsa_batch(exhaustive_batch(mdp), beta, mdp.gamma, lr=0.01, epochs=5000)
        np.testing.assert_allclose(q, policy_q(mdp, beta), atol=0.05)

    def test_q_learning_on_exhaustive_batch_approaches_optimal_q(self):
        mdp = gen_random_mdp(4, 3, 2, gamma=0.8)
        q = q_learning_batch(exhaustive_batch(mdp), mdp.gamma, lr=0.01, epochs=5000, tau=1.0)
        optimal, _ = value_iteration(mdp, tol=1e-12)
        np.testing.assert_allclose(q, optimal, atol=0.05)

    def test_q_learning_in_file_order_matches_plain_loop(self):
        mdp = gen_random_mdp(5, 3, 2, gamma=0.8)
        batch = exhaustive_batch(mdp)
        lr, gamma = 0.1, mdp.gamma
        expected = np.zeros((3, 2))
        for _ in range(20):
            for item in batch:
                expected[item.s, item.a] += lr * item.weight * (
                    item.r + gamma * expected[item.sp].max() - expected[item.s, item.a])
        q = q_learning_batch(batch, gamma, lr=lr, epochs=20, tau=1.0, batch_size=1)
        np.testing.assert_allclose(q, expected, atol=1e-12)

    def test_td_step_reads_separate_target(self):
        batch = self_loop_batch()
        q, q_target = np.zeros((1, 1)), np.full((1, 1), 4.0)
        hybrid_td_step(q, q_target, batch, 0.5, 0.0, TabularPolicy([[1.0]]), lr=0.5)
        # 0 + 0.5 (1 + 0.5 * 4 - 0)
        self.assertAlmostEqual(q[0, 0], 1.5)
        self.assertEqual(q_target[0, 0], 4.0)


class HybridFixedPointTests(SimpleTestCase):

    def setUp(self):
        self.mdp = gen_random_mdp(6, 4, 3, gamma=0.9)
        self.beta = gen_random_policy(7, 4, 3)

    def test_zero_mix_is_behavior_q(self):
        result = hybrid_fixed_point(self.mdp, HybridCriticConfig(0.0, self.beta, tol=1e-12))
        np.testing.assert_allclose(result.q, policy_q(self.mdp, self.beta), atol=1e-9)

    def test_full_mix_is_optimal_q(self):
        result = hybrid_fixed_point(self.mdp, HybridCriticConfig(1.0, self.beta, tol=1e-12))
        optimal, _ = value_iteration(self.mdp, tol=1e-12)
        np.testing.assert_allclose(result.q, optimal, atol=1e-9)

    def test_single_state_closed_form(self):
        mdp = FiniteMdp(np.ones((1, 2, 1)), [[1.0, 0.0]], 0.5, [1.0])
        cfg = HybridCriticConfig(0.5, TabularPolicy.uniform(1, 2), tol=1e-13)
        result = hybrid_fixed_point(mdp, cfg)
        # V = ((1 - mu) E_beta R + mu max R) / (1 - gamma)
        self.assertAlmostEqual(result.v[0], 1.5, places=10)
        np.testing.assert_allclose(result.w, [[0.25, -0.75]], atol=1e-10)

    def test_backup_is_a_gamma_contraction(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            cfg = HybridCriticConfig(float(rng.uniform()), self.beta)
            q1, q2 = rng.normal(size=(2, 4, 3)) * 5
            gap = np.abs(hybrid_backup(q1, self.mdp, cfg) - hybrid_backup(q2, self.mdp, cfg)).max()
            self.assertLessEqual(gap, self.mdp.gamma * np.abs(q1 - q2).max() + 1e-12)

    def test_backup_checks_shape(self):
        with self.assertRaises(ConstraintViolation):
            hybrid_backup(np.zeros((3, 3)), self.mdp, HybridCriticConfig(0.5, self.beta))

    def test_weighted_advantage_has_zero_behavior_mean_without_mix(self):
        q = np.random.default_rng(9).normal(size=(4, 3))
        w = weighted_advantage(q, self.beta, 0.0).w
        np.testing.assert_allclose(np.einsum('sa,sa->s', self.beta.probs, w), 0.0, atol=1e-12)


class ConfigTests(SimpleTestCase):

    def test_rejects_out_of_range_values(self):
        beta = TabularPolicy.uniform(2, 2)
        for kwargs in ({'mu_mix': 1.5}, {'mu_mix': -0.1}, {'mu_mix': 0.5, 'tau': 0.0},
                       {'mu_mix': 0.5, 'lr': 0.0}):
            with self.assertRaises(ConstraintViolation):
                HybridCriticConfig(behavior=beta, **kwargs)

    def test_blend(self):
        a_beta, a_star = np.array([[1.0, -1.0]]), np.array([[3.0, 1.0]])
        np.testing.assert_array_equal(weighted_advantage_blend(a_beta, a_star, 0.0), a_beta)
        np.testing.assert_array_equal(weighted_advantage_blend(a_beta, a_star, 1.0), a_star)
        np.testing.assert_allclose(weighted_advantage_blend(a_beta, a_star, 0.5), [[2.0, 0.0]])
        with self.assertRaises(ConstraintViolation):
            weighted_advantage_blend(a_beta, a_star, 1.5)
