import io

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from cpi_bounds.surrogates import cpi_lower_bound, surrogate_terms
from harness.generators import gen_batch, gen_random_ensemble, gen_random_mdp, random_feasible_weights
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import FiniteMdp, TabularPolicy, advantage, occupancy, sample_categorical
from moe_policy.mixture import BaseEnsemble, MixtureWeights, check_feasible

from .batch import BatchDataset, Transition
from .fitting import (
    estimate_advantage_from_batch,
    fit_and_project,
    fit_candidate_with_trace,
    kl_fit_candidate,
    lambda_tabular,
)
from .projection import capped_simplex, project_block, project_closed_form, project_exact
from .saa import QpProblem, assemble_qp, build_saa
from .solvers import (
    ACTIVE_SET,
    FIXED_POINT,
    KKT_METHOD,
    PG_METHOD,
    KktSolution,
    project_feasible,
    solve_kkt,
    solve_pg,
)


def occupancy_batch(mdp, policy, src=1):
    """One transition per state weighted by the policy's occupancy"""
    cand = tuple(range(mdp.n_actions))
    d = occupancy(mdp, policy).d
    return BatchDataset([Transition(s=s, a=0, cand=cand, r=0.0, sp=s, src=src, weight=d[s])
                         for s in range(mdp.n_states)], mdp.n_states, mdp.n_actions)


def flatten(lam, index_map):
    return np.array([lam.lam[s, a, i] for s, a, i in index_map])


def two_action_instance():
    """One state, R = (1, 0), gamma 0.5, bases (0.9, 0.1) and (0.3, 0.7)"""
    mdp = FiniteMdp(np.ones((1, 2, 1)), [[1.0, 0.0]], 0.5, [1.0])
    ensemble = BaseEnsemble([TabularPolicy([[0.9, 0.1]]), TabularPolicy([[0.3, 0.7]])])
    batch = BatchDataset([Transition(s=0, a=0, cand=(0, 1), r=1.0, sp=0, src=2)], 1, 2)
    saa = build_saa({2: batch}, ensemble, {2: advantage(mdp, ensemble.base(2))},
                    [0.0, 1.0], mdp.gamma)
    return mdp, ensemble, saa, assemble_qp(saa)


class BatchDatasetTests(SimpleTestCase):

    def test_rejects_action_outside_candidates(self):
        with self.assertRaises(ConstraintViolation):
            BatchDataset([Transition(s=0, a=2, cand=(0, 1), r=0.0, sp=0)])

    def test_conflicting_candidate_sets(self):
        batch = BatchDataset([Transition(s=0, a=0, cand=(0, 1), r=0.0, sp=0),
                              Transition(s=0, a=0, cand=(0, 2), r=0.0, sp=0)])
        with self.assertRaises(ConstraintViolation) as ctx:
            batch.candidate_sets()
        self.assertEqual(ctx.exception.worst, 1)

    def test_split_by_source(self):
        batch = BatchDataset([Transition(s=0, a=0, cand=(0,), r=0.0, sp=0, src=2),
                              Transition(s=1, a=0, cand=(0,), r=0.0, sp=0, src=1)])
        parts = batch.by_source()
        self.assertEqual(list(parts), [1, 2])
        self.assertEqual(parts[2].source, 2)
        self.assertIsNone(batch.source)

    def test_jsonl_reports_line_number(self):
        stream = io.StringIO('{"s": 0, "a": 0, "cand": [0, 1], "r": 1.0, "sp": 1, "src": 1}\n'
                             '{"s": 0, "a": 3, "cand": [0, 1], "r": 1.0, "sp": 1, "src": 1}\n')
        with self.assertRaises(serializers.ValidationError) as ctx:
            BatchDataset.from_jsonl(stream)
        self.assertIn('line 2', ctx.exception.detail)

    def test_jsonl_keeps_weights(self):
        batch = BatchDataset([Transition(s=0, a=1, cand=(0, 1), r=0.5, sp=1, weight=0.25)], 2, 2)
        stream = io.StringIO()
        batch.to_jsonl(stream)
        stream.seek(0)
        self.assertEqual(BatchDataset.from_jsonl(stream, 2, 2)[0], batch[0])

    def test_state_range_checked_against_mdp(self):
        with self.assertRaises(ConstraintViolation):
            BatchDataset([Transition(s=0, a=0, cand=(0,), r=0.0, sp=3)], n_states=2, n_actions=1)


class ProjectionTests(SimpleTestCase):

    def test_capped_simplex(self):
        np.testing.assert_allclose(capped_simplex([[0.8, 0.6], [0.2, -0.1]]),
                                   [[0.6, 0.4], [0.2, 0.0]], atol=1e-12)

    def test_closed_form_fixed_point(self):
        rho, beta = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])
        feasible = np.array([0.4, 0.9, 0.4])
        np.testing.assert_allclose(project_closed_form(feasible, rho, beta), feasible, atol=1e-12)

    def test_closed_form_removes_direction(self):
        rho, beta = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_closed_form(0.7 * (rho - beta), rho, beta), 0.0,
                                   atol=1e-12)

    def test_closed_form_identity_when_bases_agree(self):
        beta = np.array([0.2, 0.8])
        np.testing.assert_array_equal(project_closed_form(np.array([0.3, 1.7]), beta, beta),
                                      [0.3, 1.7])

    def test_exact_matches_closed_form_in_interior(self):
        rho, beta = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.3, 0.5])
        interior = np.array([0.5, 0.5, 0.45])
        np.testing.assert_allclose(project_exact(interior, rho, beta),
                                   project_closed_form(interior, rho, beta), atol=1e-10)

    def test_exact_projection_is_feasible_and_no_farther_than_clipping(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            rho, beta = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
            lam_tilde = rng.uniform(-0.5, 1.5, size=4)
            exact = project_exact(lam_tilde, rho, beta)
            self.assertTrue(np.all((exact >= 0) & (exact <= 1)))
            self.assertLess(abs((rho - beta) @ exact), 1e-10)
            closed = project_closed_form(lam_tilde, rho, beta)
            if abs((rho - beta) @ closed) <= 1e-12:
                self.assertLessEqual(np.linalg.norm(exact - lam_tilde),
                                     np.linalg.norm(closed - lam_tilde) + 1e-9)

    def test_block_projection_feasible(self):
        ensemble = gen_random_ensemble(1, 3, 4, 3)
        rng = np.random.default_rng(1)
        w = ensemble.deviations()[:, 0, :].T
        x = project_block(rng.uniform(-1, 2, size=(4, 2)), w)
        self.assertTrue(np.all(x >= 0))
        self.assertTrue(np.all(x.sum(axis=1) <= 1 + 1e-12))
        self.assertLess(abs(np.sum(w * x)), 1e-10)

    def test_block_projection_with_negligible_weight(self):
        x = project_block([[3.0], [0.1], [0.2]], [[0.4], [-0.4], [-1e-310]])
        np.testing.assert_allclose(x, [[1.0], [1.0], [0.2]], atol=1e-12)

    def test_feasible_weights_with_near_equal_bases(self):
        ensemble = BaseEnsemble([TabularPolicy([[0.5, 1e-6 + 3e-19, 0.5 - 1e-6]]),
                                 TabularPolicy([[0.3, 1e-6, 0.7 - 1e-6]])])
        self.assertLess(np.abs(ensemble.deviations()).min(), 1e-18)
        for seed in range(20):
            lam = random_feasible_weights(ensemble, seed)
            self.assertTrue(np.all(np.isfinite(lam.lam)))
            self.assertTrue(check_feasible(ensemble, lam).feasible)


class SaaTests(SimpleTestCase):

    def test_single_transition_coefficient(self):
        mdp, ensemble, saa, _ = two_action_instance()
        adv = advantage(mdp, ensemble.base(2))
        expected = (ensemble.base(1).probs[0] - ensemble.base(2).probs[0]) * adv[0] / 0.5
        np.testing.assert_allclose(saa.forms[2]['l1'].coef, expected, atol=1e-12)
        self.assertEqual(saa.forms[2]['l1'].const, 0.0)

    def test_zero_weights_give_zero_linear_term_at_last_anchor(self):
        mdp = gen_random_mdp(2, 4, 3)
        ensemble = gen_random_ensemble(3, 4, 3, 3)
        batch = gen_batch(mdp, ensemble.base(3), 50, seed=4, src=3)
        saa = build_saa({3: batch}, ensemble, {3: advantage(mdp, ensemble.base(3))},
                        [0, 0, 1], mdp.gamma)
        self.assertEqual(saa.forms[3]['l1'].evaluate(np.zeros(len(saa.index_map))), 0.0)

    def test_exhaustive_batch_recovers_population_bound(self):
        mdp = gen_random_mdp(5, 4, 3, gamma=0.9)
        ensemble = gen_random_ensemble(6, 4, 3, 3)
        for j in (1, 3):
            batch = occupancy_batch(mdp, ensemble.base(j), src=j)
            alpha = np.eye(3)[j - 1]
            saa = build_saa({j: batch}, ensemble, {j: advantage(mdp, ensemble.base(j))}, alpha,
                            mdp.gamma)
            qp = assemble_qp(saa)
            for seed in range(5):
                lam = random_feasible_weights(ensemble, seed)
                x = flatten(lam, saa.index_map)
                terms = surrogate_terms(mdp, ensemble, lam, j)
                self.assertAlmostEqual(saa.forms[j]['l1'].evaluate(x), terms.l1 / (1 - mdp.gamma),
                                       delta=1e-9)
                population = cpi_lower_bound(terms, mdp.gamma, use_max_l3=False)
                self.assertAlmostEqual(saa.objective(x), population, delta=1e-9)
                self.assertAlmostEqual(qp.objective(x), population, delta=1e-9)

    def test_sampled_linear_term_is_unbiased(self):
        mdp = gen_random_mdp(21, 5, 3, gamma=0.8)
        ensemble = gen_random_ensemble(22, 5, 3, 2)
        lam = random_feasible_weights(ensemble, 23)
        base = ensemble.base(2)
        d = occupancy(mdp, base).d
        adv = advantage(mdp, base)
        population = surrogate_terms(mdp, ensemble, lam, 2).l1 / (1 - mdp.gamma)
        rng = np.random.default_rng(24)
        cand = tuple(range(mdp.n_actions))
        estimates = []
        for _ in range(200):
            states = sample_categorical(np.tile(d, (20, 1)), rng)
            batch = BatchDataset([Transition(s=int(s), a=0, cand=cand, r=0.0, sp=int(s), src=2)
                                  for s in states], mdp.n_states, mdp.n_actions)
            saa = build_saa({2: batch}, ensemble, {2: adv}, [0, 1], mdp.gamma)
            estimates.append(saa.forms[2]['l1'].evaluate(flatten(lam, saa.index_map)))
        estimates = np.array(estimates)
        stderr = estimates.std(ddof=1) / np.sqrt(len(estimates))
        self.assertGreater(stderr, 0.0)
        self.assertLessEqual(abs(estimates.mean() - population), 3 * stderr + 1e-12)

    def test_alpha_must_be_on_simplex(self):
        mdp = gen_random_mdp(7, 3, 2)
        ensemble = gen_random_ensemble(8, 3, 2, 2)
        batch = gen_batch(mdp, ensemble.base(2), 10, seed=0, src=2)
        with self.assertRaises(ConstraintViolation):
            build_saa({2: batch}, ensemble, {2: np.zeros((3, 2))}, [0.5, 0.6], mdp.gamma)

    def test_anchor_with_weight_needs_batch(self):
        mdp = gen_random_mdp(9, 3, 2)
        ensemble = gen_random_ensemble(10, 3, 2, 2)
        batch = gen_batch(mdp, ensemble.base(2), 10, seed=0, src=2)
        with self.assertRaises(ConstraintViolation):
            build_saa({2: batch}, ensemble, {2: np.zeros((3, 2))}, [0.5, 0.5], mdp.gamma)


class QpAssemblyTests(SimpleTestCase):

    def test_two_by_two_hand_expansion(self):
        _, _, _, qp = two_action_instance()
        # l1 = (0.84, 0.36), l2 = (1.2, 1.2), l4 = (0.84, 0.36), gamma = 0.5
        l2, l4 = np.array([1.2, 1.2]), np.array([0.84, 0.36])
        np.testing.assert_allclose(qp.lin, [0.84, 0.36], atol=1e-12)
        np.testing.assert_allclose(qp.quad, 0.5 * (np.outer(l2, l4) + np.outer(l4, l2)),
                                   atol=1e-12)
        np.testing.assert_allclose(qp.eq_matrix, [[0.6, -0.6]], atol=1e-12)

    def test_quadratic_matches_saa_at_random_points(self):
        mdp = gen_random_mdp(11, 4, 3)
        ensemble = gen_random_ensemble(12, 4, 3, 3)
        batches = {j: gen_batch(mdp, ensemble.base(j), 40, seed=j, src=j) for j in (1, 2, 3)}
        advantages = {j: advantage(mdp, ensemble.base(j)) for j in (1, 2, 3)}
        saa = build_saa(batches, ensemble, advantages, [0.2, 0.3, 0.5], mdp.gamma)
        qp = assemble_qp(saa)
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.uniform(size=qp.n)
            self.assertAlmostEqual(qp.objective(x), saa.objective(x), delta=1e-10)

    def test_zero_advantage_keeps_origin_optimal(self):
        mdp = gen_random_mdp(13, 3, 2)
        ensemble = gen_random_ensemble(14, 3, 2, 2)
        batch = gen_batch(mdp, ensemble.base(2), 30, seed=1, src=2)
        qp = assemble_qp(build_saa({2: batch}, ensemble, {2: np.zeros((3, 2))}, [0, 1],
                                   mdp.gamma))
        np.testing.assert_array_equal(qp.lin, 0.0)
        solution = solve_kkt(qp)
        np.testing.assert_allclose(solution.lam_star, 0.0, atol=1e-10)
        self.assertAlmostEqual(solution.objective, 0.0, places=12)


class SolverTests(SimpleTestCase):

    def test_two_action_optimum(self):
        _, _, _, qp = two_action_instance()
        solution = solve_kkt(qp)
        # objective 1.2 t - 1.44 t^2 along lam = (t, t)
        self.assertEqual(solution.method, KKT_METHOD)
        np.testing.assert_allclose(solution.lam_star, [5 / 12, 5 / 12], atol=1e-9)
        self.assertAlmostEqual(solution.objective, 0.25, places=9)
        self.assertLessEqual(solution.kkt_residual, 1e-8)

    def test_matches_grid_search(self):
        _, _, _, qp = two_action_instance()
        grid = max(qp.objective(np.array([t, t])) for t in np.arange(0, 1001) / 1000)
        self.assertAlmostEqual(solve_kkt(qp).objective, grid, delta=1e-6)

    def test_matches_grid_search_on_random_instances(self):
        # one state and two actions: the feasible set is the segment lam = (t, t)
        grid = np.arange(0, 1001) / 1000
        for seed in range(50):
            mdp = gen_random_mdp(seed, 1, 2)
            ensemble = gen_random_ensemble(seed + 1000, 1, 2, 2)
            batch = BatchDataset([Transition(s=0, a=0, cand=(0, 1), r=0.0, sp=0, src=2)], 1, 2)
            qp = assemble_qp(build_saa({2: batch}, ensemble, {2: advantage(mdp, ensemble.base(2))},
                                       [0, 1], mdp.gamma))
            solution = solve_kkt(qp)
            best = max(qp.objective(np.array([t, t])) for t in grid)
            scale = 1.0 + np.abs(qp.quad).max() + np.abs(qp.lin).max()
            self.assertGreaterEqual(solution.objective, best - 1e-7 * scale, msg=f'seed {seed}')
            self.assertLessEqual(solution.objective, best + 1e-6 * scale, msg=f'seed {seed}')
            self.assertLess(abs(qp.eq_matrix @ solution.lam_star).max(), 1e-9)

    def test_projected_gradient_agrees(self):
        _, _, _, qp = two_action_instance()
        pg = solve_pg(qp)
        self.assertEqual(pg.method, PG_METHOD)
        self.assertAlmostEqual(pg.objective, solve_kkt(qp).objective, delta=1e-6)

    def test_interior_optimum_is_linear_solve(self):
        quad = np.array([[2.0, 0.5], [0.5, 1.0]])
        target = np.array([0.2, 0.3])
        qp = QpProblem(quad, quad @ target, np.zeros((0, 2)), [[1.0, 1.0]])
        solution = solve_kkt(qp)
        self.assertEqual(solution.method, KKT_METHOD)
        self.assertEqual(solution.path, FIXED_POINT)
        self.assertEqual(solution.iterations, 1)
        np.testing.assert_allclose(solution.lam_star, np.linalg.solve(quad, qp.lin), atol=1e-10)

    def test_zero_linear_term(self):
        qp = QpProblem(np.eye(2), np.zeros(2), np.zeros((0, 2)), [[1.0, 1.0]])
        np.testing.assert_allclose(solve_kkt(qp).lam_star, 0.0, atol=1e-12)
        np.testing.assert_allclose(solve_pg(qp).lam_star, 0.0, atol=1e-12)

    def test_box_active_optimum(self):
        qp = QpProblem(np.eye(2), [3.0, -1.0], np.zeros((0, 2)), [[1.0, 0.0], [0.0, 1.0]])
        solution = solve_kkt(qp)
        np.testing.assert_allclose(solution.lam_star, [1.0, 0.0], atol=1e-10)
        self.assertLessEqual(solution.kkt_residual, 1e-8)

    def test_fixed_point_settles_on_simplex_multiplier(self):
        qp = QpProblem(np.eye(2), [3.0, -1.0], np.zeros((0, 2)), [[1.0, 0.0], [0.0, 1.0]])
        solution = solve_kkt(qp)
        self.assertEqual(solution.path, FIXED_POINT)
        # x_0 = 3 - kappa_0 is halved towards 1 each step
        self.assertGreater(solution.iterations, 1)
        self.assertLessEqual(solution.iterations, 1000)
        np.testing.assert_allclose(solution.kappa, [2.0, 0.0], atol=1e-10)

    def test_active_set_method_agrees(self):
        _, _, _, qp = two_action_instance()
        active = solve_kkt(qp, method=ACTIVE_SET)
        self.assertEqual(active.method, KKT_METHOD)
        self.assertEqual(active.path, ACTIVE_SET)
        np.testing.assert_allclose(active.lam_star, solve_kkt(qp).lam_star, atol=1e-9)
        np.testing.assert_allclose(active.lam_star, [5 / 12, 5 / 12], atol=1e-9)

    def test_unknown_method_rejected(self):
        _, _, _, qp = two_action_instance()
        with self.assertRaises(ConstraintViolation):
            solve_kkt(qp, method='newton')

    def test_indefinite_problem_falls_back(self):
        qp = QpProblem(np.diag([-1.0, 1.0]), [0.1, 0.1], np.zeros((0, 2)), [[1.0, 1.0]])
        solution = solve_kkt(qp)
        self.assertEqual(solution.method, PG_METHOD)
        self.assertGreaterEqual(solution.objective, qp.objective(np.zeros(2)) - 1e-12)
        x = solution.lam_star
        self.assertTrue(np.all(x >= -1e-12) and x.sum() <= 1 + 1e-9)

    def test_project_feasible_on_assembled_problem(self):
        mdp = gen_random_mdp(15, 4, 3)
        ensemble = gen_random_ensemble(16, 4, 3, 3)
        batch = gen_batch(mdp, ensemble.base(3), 60, seed=2, src=3)
        saa = build_saa({3: batch}, ensemble, {3: advantage(mdp, ensemble.base(3))}, [0, 0, 1],
                        mdp.gamma)
        qp = assemble_qp(saa)
        x = project_feasible(qp, np.random.default_rng(3).uniform(-1, 2, size=qp.n))
        self.assertLess(np.abs(qp.eq_matrix @ x).max(), 1e-10)
        self.assertLessEqual((qp.ineq_matrix @ x).max(), 1 + 1e-12)
        self.assertGreaterEqual(x.min(), 0.0)


class FittingTests(SimpleTestCase):

    def test_lambda_tabular_scatters_partial_coverage(self):
        solution = KktSolution(np.array([0.3, 0.7]), np.zeros(1), np.zeros(2), 0.0, 1,
                               KKT_METHOD, 0.0)
        lam = lambda_tabular(solution, ((1, 0, 0), (1, 2, 0)), n_states=3, n_actions=3)
        self.assertEqual(lam.lam.shape, (3, 3, 1))
        self.assertEqual(lam.lam[1, 0, 0], 0.3)
        self.assertEqual(lam.lam[1, 2, 0], 0.7)
        self.assertEqual(np.count_nonzero(lam.lam), 2)

    def test_lambda_tabular_empty(self):
        solution = KktSolution(np.zeros(0), np.zeros(0), np.zeros(0), 0.0, 0, KKT_METHOD, 0.0)
        np.testing.assert_array_equal(lambda_tabular(solution, (), 2, 2).lam, 0.0)

    def setUp(self):
        self.mu = TabularPolicy([[0.2, 0.5, 0.3], [0.6, 0.2, 0.2]])
        self.rho = TabularPolicy([[0.5, 0.2, 0.3], [0.2, 0.2, 0.6]])
        self.batch = BatchDataset([Transition(s=s, a=0, cand=(0, 1, 2), r=0.0, sp=s)
                                   for s in (0, 1)], 2, 3)

    def test_zero_weights_fit_the_base(self):
        fitted = kl_fit_candidate(self.batch, MixtureWeights.zeros(2, 3, 2), self.mu, self.rho)
        np.testing.assert_allclose(fitted.probs, self.mu.probs, atol=1e-12)

    def test_unit_weights_fit_the_candidate(self):
        lam = MixtureWeights(np.ones((2, 3, 1)))
        fitted = kl_fit_candidate(self.batch, lam, self.mu, self.rho, lr=0.5, steps=200)
        np.testing.assert_allclose(fitted.probs, self.rho.probs, atol=1e-10)

    def test_half_weights_reach_the_midpoint(self):
        lam = MixtureWeights(np.full((2, 3, 1), 0.5))
        fitted, trace = fit_candidate_with_trace(self.batch, lam, self.mu, self.rho, lr=0.3,
                                                 steps=300)
        midpoint = 0.5 * (self.mu.probs + self.rho.probs)
        self.assertLess(0.5 * np.abs(fitted.probs - midpoint).sum(axis=1).max(), 1e-4)
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(trace, trace[1:])))

    def test_unvisited_states_keep_the_base(self):
        batch = self.batch.subset([0])
        lam = MixtureWeights(np.ones((2, 3, 1)))
        fitted = kl_fit_candidate(batch, lam, self.mu, self.rho)
        np.testing.assert_array_equal(fitted.probs[1], self.mu.probs[1])

    def test_fit_learning_rate_range(self):
        for lr in (0.0, 1.5):
            with self.assertRaises(ConstraintViolation):
                kl_fit_candidate(self.batch, MixtureWeights.zeros(2, 3, 2), self.mu, self.rho,
                                 lr=lr)

    def test_fit_and_project_is_feasible(self):
        lam_star = MixtureWeights(np.array([[[0.6], [0.6], [0.1]], [[0.3], [0.9], [0.3]]]))
        lam = fit_and_project(self.batch, lam_star, self.mu, self.rho)
        report = check_feasible(BaseEnsemble([self.rho, self.mu], support_floor=0.0), lam)
        self.assertTrue(report.feasible, report)

    def test_batch_advantage_close_to_exact(self):
        mdp = gen_random_mdp(17, 3, 2, gamma=0.8)
        policy = TabularPolicy([[0.3, 0.7], [0.5, 0.5], [0.9, 0.1]])
        transitions = [Transition(s=s, a=a, cand=(0, 1), r=float(mdp.reward[s, a]), sp=sp,
                                  weight=float(mdp.transition[s, a, sp]))
                       for s in range(3) for a in range(2) for sp in range(3)]
        batch = BatchDataset(transitions, 3, 2)
        estimate = estimate_advantage_from_batch(batch, policy, mdp.gamma, lr=0.01, epochs=5000)
        self.assertEqual(estimate.unvisited, ())
        np.testing.assert_allclose(estimate.table, advantage(mdp, policy), atol=0.05)

    def test_unvisited_advantage_rows_are_flagged(self):
        policy = TabularPolicy.uniform(3, 2)
        batch = BatchDataset([Transition(s=0, a=1, cand=(0, 1), r=1.0, sp=2)], 3, 2)
        estimate = estimate_advantage_from_batch(batch, policy, 0.5, lr=0.5, epochs=10)
        self.assertEqual(estimate.unvisited, (1, 2))
        np.testing.assert_array_equal(estimate.table[1:], 0.0)
