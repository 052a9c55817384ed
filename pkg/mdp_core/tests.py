import numpy as np
from django.test import SimpleTestCase

from .exceptions import ConstraintViolation
from .serializers import FiniteMdpSerializer
from .tabular import (
    FiniteMdp,
    TabularPolicy,
    advantage,
    bellman_residual,
    expected_return,
    monte_carlo_return,
    occupancy,
    occupancy_from_each_state,
    policy_q,
    policy_reward,
    policy_transition,
    policy_value,
    value_iteration,
)


def random_mdp(seed, n_states=5, n_actions=3, gamma=0.9):
    rng = np.random.default_rng(seed)
    return FiniteMdp(rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
                     rng.uniform(size=(n_states, n_actions)), gamma,
                     rng.dirichlet(np.ones(n_states)))


def random_policy(seed, n_states=5, n_actions=3):
    rng = np.random.default_rng(seed)
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


class FiniteMdpTests(SimpleTestCase):

    def test_rejects_gamma_of_one(self):
        with self.assertRaises(ConstraintViolation):
            FiniteMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 1.0, [1.0])

    def test_rejects_rows_far_from_stochastic(self):
        with self.assertRaises(ConstraintViolation):
            FiniteMdp([[[0.5, 0.6]], [[1.0, 0.0]]], np.zeros((2, 1)), 0.5, [1.0, 0.0])

    def test_repairs_tiny_drift(self):
        mdp = FiniteMdp([[[0.5, 0.5 + 5e-10]], [[1.0, 0.0]]], np.zeros((2, 1)), 0.5, [1.0, 0.0])
        self.assertAlmostEqual(mdp.transition[0, 0].sum(), 1.0, delta=1e-15)

    def test_rejects_negative_entries(self):
        with self.assertRaises(ConstraintViolation):
            TabularPolicy([[1.1, -0.1]])

    def test_document_round_trip_through_serializer(self):
        mdp = random_mdp(0)
        serializer = FiniteMdpSerializer(data=mdp.to_dict())
        self.assertTrue(serializer.is_valid(), serializer.errors)
        np.testing.assert_array_equal(serializer.to_mdp().transition, mdp.transition)

    def test_serializer_rejects_unknown_keys(self):
        document = random_mdp(0).to_dict()
        document['extra'] = 1
        serializer = FiniteMdpSerializer(data=document)
        self.assertFalse(serializer.is_valid())
        self.assertIn('extra', serializer.errors)

    def test_serializer_rejects_wrong_shape(self):
        document = random_mdp(0).to_dict()
        document['R'] = document['R'][:-1]
        self.assertFalse(FiniteMdpSerializer(data=document).is_valid())


class PolicyEvaluationTests(SimpleTestCase):

    def test_single_state_geometric_series(self):
        mdp = FiniteMdp(np.ones((1, 1, 1)), [[1.0]], 0.5, [1.0])
        policy = TabularPolicy([[1.0]])
        self.assertAlmostEqual(policy_value(mdp, policy)[0], 2.0, places=12)
        self.assertAlmostEqual(expected_return(mdp, policy), 2.0, places=12)

    def test_zero_discount_is_one_step_reward(self):
        mdp = random_mdp(1, gamma=0.0)
        policy = random_policy(2)
        np.testing.assert_allclose(policy_value(mdp, policy), policy_reward(mdp, policy),
                                   atol=1e-12)
        np.testing.assert_allclose(policy_q(mdp, policy), mdp.reward, atol=1e-12)

    def test_matches_iterative_evaluation(self):
        mdp, policy = random_mdp(3), random_policy(4)
        kernel, rewards = policy_transition(mdp, policy), policy_reward(mdp, policy)
        values = np.zeros(mdp.n_states)
        for _ in range(10_000):
            values = rewards + mdp.gamma * kernel @ values
        np.testing.assert_allclose(policy_value(mdp, policy), values, atol=1e-9)

    def test_advantage_has_zero_policy_mean(self):
        for seed in range(10):
            mdp, policy = random_mdp(seed), random_policy(seed + 100)
            means = np.einsum('sa,sa->s', policy.probs, advantage(mdp, policy))
            np.testing.assert_allclose(means, 0.0, atol=1e-9)

    def test_q_matches_state_action_linear_solve(self):
        mdp, policy = random_mdp(5), random_policy(6)
        n = mdp.n_states * mdp.n_actions
        # Q = R + gamma T Pi Q over flattened (s, a)
        step = np.einsum('sat,tb->satb', mdp.transition, policy.probs).reshape(n, n)
        q = np.linalg.solve(np.eye(n) - mdp.gamma * step, mdp.reward.reshape(n))
        np.testing.assert_allclose(policy_q(mdp, policy), q.reshape(mdp.reward.shape), atol=1e-9)

    def test_point_mass_start_reads_one_state(self):
        mdp = random_mdp(7)
        start = np.zeros(mdp.n_states)
        start[2] = 1.0
        mdp = FiniteMdp(mdp.transition, mdp.reward, mdp.gamma, start)
        policy = random_policy(8)
        self.assertAlmostEqual(expected_return(mdp, policy), policy_value(mdp, policy)[2],
                               places=12)

    def test_monte_carlo_agrees_with_exact_return(self):
        mdp, policy = random_mdp(9, gamma=0.5), random_policy(10)
        mean, stderr = monte_carlo_return(mdp, policy, n_episodes=20_000, horizon=60, seed=0)
        self.assertLess(abs(mean - expected_return(mdp, policy)), 4 * stderr + 1e-12)


class OccupancyTests(SimpleTestCase):

    def test_zero_discount_returns_start_distribution(self):
        mdp = random_mdp(11, gamma=0.0)
        np.testing.assert_allclose(occupancy(mdp, random_policy(12)).d, mdp.initial_dist,
                                   atol=1e-12)

    def test_normalized(self):
        for seed in range(5):
            d = occupancy(random_mdp(seed), random_policy(seed + 1)).d
            self.assertAlmostEqual(d.sum(), 1.0, delta=1e-10)

    def test_matches_truncated_series(self):
        mdp, policy = random_mdp(13, gamma=0.9), random_policy(14)
        kernel = policy_transition(mdp, policy)
        row, series = mdp.initial_dist.copy(), np.zeros(mdp.n_states)
        for t in range(201):
            series += (1 - mdp.gamma) * mdp.gamma ** t * row
            row = row @ kernel
        np.testing.assert_allclose(occupancy(mdp, policy).d, series, atol=1e-8)

    def test_dot_reward_is_scaled_return(self):
        mdp, policy = random_mdp(15), random_policy(16)
        d = occupancy(mdp, policy).d
        self.assertAlmostEqual(d @ policy_reward(mdp, policy),
                               (1 - mdp.gamma) * expected_return(mdp, policy), delta=1e-9)
        d_sa = occupancy(mdp, policy).state_action(policy)
        self.assertAlmostEqual(float(np.sum(d_sa * mdp.reward)),
                               (1 - mdp.gamma) * expected_return(mdp, policy), delta=1e-9)

    def test_anchor_state_and_rows(self):
        mdp, policy = random_mdp(17), random_policy(18)
        rows = occupancy_from_each_state(mdp, policy)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(occupancy(mdp, policy, anchor=3).d, rows[3], atol=1e-12)
        with self.assertRaises(ConstraintViolation):
            occupancy(mdp, policy, anchor=mdp.n_states)


class ValueIterationTests(SimpleTestCase):

    def test_zero_discount_is_greedy_on_reward(self):
        mdp = random_mdp(19, gamma=0.0)
        q, policy = value_iteration(mdp, tol=1e-12)
        np.testing.assert_allclose(q, mdp.reward, atol=1e-12)
        np.testing.assert_array_equal(policy.probs.argmax(axis=1), mdp.reward.argmax(axis=1))

    def test_two_state_chain(self):
        transition = np.zeros((2, 1, 2))
        transition[0, 0, 1] = 1.0
        transition[1, 0, 1] = 1.0
        mdp = FiniteMdp(transition, [[0.0], [1.0]], 0.5, [1.0, 0.0])
        q, _ = value_iteration(mdp, tol=1e-12)
        np.testing.assert_allclose(q.max(axis=1), [1.0, 2.0], atol=1e-10)

    def test_residual_within_tolerance(self):
        mdp = random_mdp(20)
        q, _ = value_iteration(mdp, tol=1e-8)
        self.assertLessEqual(bellman_residual(mdp, q), 1e-8)

    def test_dominates_every_policy(self):
        mdp = random_mdp(21)
        q, _ = value_iteration(mdp, tol=1e-11)
        for seed in range(20):
            self.assertTrue(np.all(policy_q(mdp, random_policy(seed)) <= q + 1e-8))

    def test_ties_go_to_lowest_action(self):
        mdp = FiniteMdp(np.ones((1, 3, 1)), [[1.0, 1.0, 1.0]], 0.5, [1.0])
        _, policy = value_iteration(mdp, tol=1e-10)
        np.testing.assert_array_equal(policy.probs, [[1.0, 0.0, 0.0]])
