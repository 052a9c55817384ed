import io

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from critic_hybrid.critics import sarsa_batch
from harness.generators import (
    gen_batch,
    gen_mood_chain,
    gen_random_mdp,
    gen_random_policy,
    mood_chain_experts,
)
from mdp_core.exceptions import CapacityExceeded, ConstraintViolation
from mdp_core.tabular import TabularPolicy, expected_return, value_iteration
from mixture_qp.batch import BatchDataset, Transition

from .learners import (
    ManagerQ,
    cql_gap,
    cql_manager,
    dqn_manager,
    fit_user_model,
    greedy_selector,
    _fitted_q_iteration,
    mbrl_manager,
    offline_q_manager,
)
from .moe_env import ManagerBatch, ManagerTransition, build_moe_env, collect_manager_batch
from .oracle import manager_value, oracle_manager
from .train_loop import SKIPPED_METHOD, TrainLoopConfig, train_loop


def deterministic_experts(n_states, n_actions):
    return [TabularPolicy.deterministic([a] * n_states, n_actions) for a in range(n_actions)]


class OracleTests(SimpleTestCase):

    def test_single_expert_is_its_return(self):
        mdp = gen_random_mdp(0, 4, 3)
        expert = gen_random_policy(1, 4, 3)
        oracle = oracle_manager(mdp, [expert], tol=1e-12)
        self.assertAlmostEqual(oracle.value, expected_return(mdp, expert), delta=1e-9)

    def test_all_single_action_experts_recover_optimal_value(self):
        mdp = gen_random_mdp(2, 3, 2)
        oracle = oracle_manager(mdp, deterministic_experts(3, 2), tol=1e-12)
        optimal, _ = value_iteration(mdp, tol=1e-12)
        self.assertAlmostEqual(oracle.value, mdp.initial_dist @ optimal.max(axis=1), delta=1e-9)

    def test_greedy_selection_attains_oracle_value(self):
        mdp = gen_random_mdp(3, 3, 3)
        experts = [gen_random_policy(seed, 3, 3) for seed in (4, 5)]
        oracle = oracle_manager(mdp, experts, tol=1e-12)
        self.assertAlmostEqual(manager_value(mdp, experts, oracle.select), oracle.value,
                               delta=1e-8)
        for expert in experts:
            self.assertLessEqual(expected_return(mdp, expert), oracle.value + 1e-9)

    def test_capacity(self):
        mdp = gen_random_mdp(6, 3, 2)
        with self.assertRaises(CapacityExceeded):
            oracle_manager(mdp, deterministic_experts(3, 2), cap=5)


class MoeEnvTests(SimpleTestCase):

    def setUp(self):
        self.mdp = gen_random_mdp(7, 4, 3)
        self.experts = [gen_random_policy(seed, 4, 3) for seed in (8, 9, 10)]

    def rollout(self, seed):
        env = build_moe_env(self.mdp, self.experts, seed=seed)
        steps = [env.reset()]
        for j in (0, 2, 1, 1, 0):
            state, reward, done = env.step(j)
            steps.append((state, reward, done))
        return steps

    def test_seed_fixes_trajectory(self):
        self.assertEqual(self.rollout(11), self.rollout(11))

    def test_episode_ends_at_horizon(self):
        dones = [step[2] for step in self.rollout(12)[1:]]
        self.assertEqual(dones, [False, False, False, False, True])

    def test_deterministic_experts_propose_their_action(self):
        env = build_moe_env(self.mdp, deterministic_experts(4, 3), seed=0)
        self.assertEqual(env.reset().candidates, (0, 1, 2))
        state, _, _ = env.step(1)
        self.assertEqual(state.candidates, (0, 1, 2))

    def test_step_checks(self):
        env = build_moe_env(self.mdp, self.experts, seed=0)
        with self.assertRaises(ConstraintViolation):
            env.step(0)
        env.reset()
        with self.assertRaises(ConstraintViolation):
            env.step(3)

    def test_collected_batch_jsonl(self):
        env = build_moe_env(self.mdp, self.experts, seed=1)
        batch = collect_manager_batch(env, 12, seed=2)
        self.assertEqual(len(batch), 12)
        stream = io.StringIO()
        batch.to_jsonl(stream)
        stream.seek(0)
        self.assertEqual(ManagerBatch.from_jsonl(stream).transitions, batch.transitions)

    def test_jsonl_reports_line_number(self):
        stream = io.StringIO('{"s": 0, "cand": [0, 1], "j": 1, "r": 0.5, "sp": 1, "cand_next": [1, 1]}\n'
                             '{"s": 0, "cand": [0, 1], "j": 2, "r": 0.5, "sp": 1, "cand_next": [1, 1]}\n')
        with self.assertRaises(serializers.ValidationError) as ctx:
            ManagerBatch.from_jsonl(stream)
        self.assertIn('line 2', ctx.exception.detail)


class ManagerQTests(SimpleTestCase):

    def test_rows_shared_across_candidate_order(self):
        q = ManagerQ(3)
        q.row(0, (2, 0))[2] = 1.0
        np.testing.assert_array_equal(q.values(0, (0, 2)), [0.0, 1.0])
        self.assertEqual(q.greedy(0, (0, 2)), 1)
        self.assertEqual(len(q), 1)

    def test_unseen_rows_read_zero(self):
        q = ManagerQ(2)
        np.testing.assert_array_equal(q.values(1, (0, 1, 1)), 0.0)
        np.testing.assert_allclose(q.policy(1, (0, 1)), [0.5, 0.5])
        self.assertEqual(len(q), 0)


class DqnTests(SimpleTestCase):

    def test_zero_learning_rate_leaves_rows_at_zero(self):
        mdp = gen_random_mdp(13, 3, 2)
        env = build_moe_env(mdp, [gen_random_policy(s, 3, 2) for s in (14, 15)], seed=0)
        seen = []
        q = dqn_manager(env, 4, lr=0.0, callback=lambda episode, table: seen.append(episode))
        self.assertEqual(seen, [1, 2, 3, 4])
        self.assertGreater(len(q), 0)
        for row in q.rows.values():
            np.testing.assert_array_equal(row, 0.0)

    def test_deterministic_chain_reaches_oracle(self):
        mdp = gen_mood_chain(3, slip=0.0, gamma=0.8)
        experts = mood_chain_experts(mdp)[:2]
        q = dqn_manager(build_moe_env(mdp, experts, seed=0), 400, gamma=0.8, lr=0.2, seed=1)
        oracle = oracle_manager(mdp, experts, tol=1e-12)
        learned = manager_value(mdp, experts, greedy_selector(q))
        self.assertGreaterEqual(learned, oracle.value - 0.05 * abs(oracle.value))


class ForcedChoiceTests(SimpleTestCase):
    """With a single expert (or copies of it) every manager returns that expert's value"""

    def setUp(self):
        self.mdp = gen_random_mdp(30, 4, 3)
        self.expert = gen_random_policy(31, 4, 3)
        self.target = expected_return(self.mdp, self.expert)

    def check(self, experts, q):
        self.assertAlmostEqual(manager_value(self.mdp, experts, greedy_selector(q)), self.target,
                               delta=1e-9)

    def test_dqn(self):
        for experts in ([self.expert], [self.expert, self.expert]):
            q = dqn_manager(build_moe_env(self.mdp, experts, seed=0), 20, seed=1)
            self.check(experts, q)

    def test_cql(self):
        for experts in ([self.expert], [self.expert, self.expert]):
            batch = collect_manager_batch(build_moe_env(self.mdp, experts, seed=2), 40, seed=3)
            q = cql_manager(batch, 1.0, steps=50, batch_size=8, seed=4, n_actions=3)
            self.check(experts, q)

    def test_mbrl(self):
        batch = gen_batch(self.mdp, self.expert, 60, seed=5)
        for experts in ([self.expert], [self.expert, self.expert]):
            self.check(experts, mbrl_manager(batch, experts, 100, seed=6, sweeps=20))


def two_choice_batch():
    """State 0 offers (0, 1): expert 0 earns 0, expert 1 earns 1; state 1 is never a source"""
    return ManagerBatch([
        ManagerTransition(s=0, cand=(0, 1), j=0, r=0.0, sp=1, cand_next=(0, 1)),
        ManagerTransition(s=0, cand=(0, 1), j=1, r=1.0, sp=1, cand_next=(0, 1)),
    ])


class CqlTests(SimpleTestCase):

    def fit(self, alpha):
        batch = two_choice_batch()
        q = cql_manager(batch, alpha, lr=0.05, steps=3000, batch_size=2)
        return q.values(0, (0, 1)), cql_gap(q, batch)

    def test_zero_alpha_is_plain_offline_q(self):
        batch = collect_manager_batch(
            build_moe_env(gen_random_mdp(16, 3, 2), [gen_random_policy(s, 3, 2) for s in (17, 18)],
                          seed=0), 40, seed=1)
        plain = offline_q_manager(batch, steps=50, batch_size=8, seed=3).snapshot()
        conservative = cql_manager(batch, 0.0, steps=50, batch_size=8, seed=3).snapshot()
        self.assertEqual(list(plain), list(conservative))
        for key in plain:
            np.testing.assert_array_equal(plain[key], conservative[key])

    def test_single_step_update(self):
        batch = ManagerBatch([ManagerTransition(s=0, cand=(0, 1), j=1, r=1.0, sp=1,
                                                cand_next=(0, 1))])
        q = cql_manager(batch, 1.0, lr=0.1, steps=1)
        # grad = (Q - target) on slot 1 + alpha (softmax - e_0)
        np.testing.assert_allclose(q.values(0, (0, 1)), [0.05, 0.05], atol=1e-12)

    def test_penalty_favors_the_primitive_slot(self):
        values0, gap0 = self.fit(0.0)
        values1, gap1 = self.fit(1.0)
        values10, gap10 = self.fit(10.0)
        np.testing.assert_allclose(values0, [0.0, 1.0], atol=1e-6)
        self.assertAlmostEqual(gap0, 1 / (1 + np.exp(-1.0)), places=6)
        self.assertLess(gap1, gap0)
        self.assertLess(gap10, gap0)
        margins = [v[0] - v[1] for v in (values0, values1, values10)]
        self.assertLess(margins[0], margins[1])
        self.assertLessEqual(gap10, gap1)
        self.assertLess(margins[1], margins[2])

    def test_negative_alpha_rejected(self):
        with self.assertRaises(ConstraintViolation):
            cql_manager(two_choice_batch(), -1.0)


class ModelBasedTests(SimpleTestCase):

    def test_unsmoothed_model_recovers_deterministic_chain(self):
        mdp = gen_mood_chain(5, slip=0.0, gamma=0.8)
        batch = BatchDataset([
            Transition(s=s, a=a, cand=(0, 1, 2), r=float(mdp.reward[s, a]),
                       sp=int(mdp.transition[s, a].argmax()))
            for s in range(5) for a in range(3)], 5, 3)
        model = fit_user_model(batch, 5, 3, gamma=0.8, smoothing=0.0)
        np.testing.assert_allclose(model.transition, mdp.transition, atol=1e-12)
        np.testing.assert_allclose(model.reward, mdp.reward, atol=1e-12)
        np.testing.assert_allclose(model.initial_dist, 0.2, atol=1e-12)

    def test_mood_chain_manager_near_oracle(self):
        mdp = gen_mood_chain(5, slip=0.1, gamma=0.8)
        experts = mood_chain_experts(mdp)
        batch = gen_batch(mdp, TabularPolicy.uniform(5, 3), 500, seed=1)
        q = mbrl_manager(batch, experts, 2000, gamma=0.8, seed=2, sweeps=100)
        oracle = oracle_manager(mdp, experts, tol=1e-12)
        learned = manager_value(mdp, experts, greedy_selector(q))
        self.assertGreaterEqual(learned, oracle.value - 0.05 * abs(oracle.value))

    def test_fitted_q_iteration_with_unit_step_is_value_iteration(self):
        loop = ManagerBatch([ManagerTransition(s=0, cand=(0,), j=0, r=1.0, sp=0, cand_next=(0,))])
        sweeps = []
        q = _fitted_q_iteration(loop, 0.5, 1.0, 60, 1, callback=lambda k, table: sweeps.append(k))
        self.assertAlmostEqual(q.values(0, (0,))[0], 2.0, places=12)
        self.assertEqual(sweeps[-1], 60)
        q = _fitted_q_iteration(two_choice_batch(), 0.8, 1.0, 1, 2)
        np.testing.assert_allclose(q.values(0, (0, 1)), [0.0, 1.0], atol=1e-12)

    def test_empty_budget(self):
        mdp = gen_mood_chain(3)
        batch = gen_batch(mdp, TabularPolicy.uniform(3, 3), 10)
        self.assertEqual(len(mbrl_manager(batch, mood_chain_experts(mdp), 0)), 0)


class TrainLoopTests(SimpleTestCase):

    def setUp(self):
        self.mdp = gen_random_mdp(20, 4, 3, gamma=0.8)
        self.beta = gen_random_policy(21, 4, 3)
        self.batch = gen_batch(self.mdp, self.beta, 20, seed=22)

    def test_no_iterations_returns_behavior(self):
        report = train_loop(TrainLoopConfig(self.batch, self.beta, iterations=0))
        self.assertIs(report.policy, self.beta)
        self.assertEqual(report.metrics, [])
        np.testing.assert_array_equal(report.lam.lam, 0.0)
        np.testing.assert_array_equal(report.q, 0.0)

    def test_without_candidate_reduces_to_sarsa(self):
        config = TrainLoopConfig(self.batch, self.beta, iterations=5 * len(self.batch),
                                 gamma=self.mdp.gamma, minibatch_size=1, shuffle=False,
                                 lr=0.1, tau=1.0, refresh=False)
        report = train_loop(config)
        expected = sarsa_batch(self.batch, self.beta, self.mdp.gamma, lr=0.1, epochs=5)
        np.testing.assert_allclose(report.q, expected, atol=1e-12)
        self.assertEqual({row['method'] for row in report.metrics}, {SKIPPED_METHOD})

    def test_mixture_does_not_lose_to_behavior(self):
        mdp = gen_mood_chain(5, slip=0.0, gamma=0.8)
        beta = TabularPolicy.uniform(5, 3)
        batch = BatchDataset([
            Transition(s=s, a=a, cand=(0, 1, 2), r=float(mdp.reward[s, a]),
                       sp=int(mdp.transition[s, a].argmax()))
            for s in range(5) for a in range(3)], 5, 3)
        config = TrainLoopConfig(batch, beta, iterations=200, mdp=mdp, minibatch_size=15, tau=1.0,
                                 shuffle=False, lr=0.5, fit_lr=1.0, fit_steps=1)
        report = train_loop(config)
        final = expected_return(mdp, report.policy)
        self.assertGreaterEqual(final, expected_return(mdp, beta) - 1e-6)
        self.assertAlmostEqual(report.metrics[-1]['return_estimate'], final, places=12)
        self.assertEqual(len(report.metrics), 200)

    def test_config_validation(self):
        for kwargs in ({'iterations': -1}, {'iterations': 1, 'minibatch_size': 0},
                       {'iterations': 1, 'mu_mix': 2.0}, {'iterations': 1, 'tau': 0.0}):
            with self.assertRaises(ConstraintViolation):
                TrainLoopConfig(self.batch, self.beta, **kwargs)
        with self.assertRaises(ConstraintViolation):
            TrainLoopConfig(BatchDataset([]), self.beta, iterations=1)
