import numpy as np
from django.test import SimpleTestCase

from harness.generators import gen_random_ensemble, gen_random_policy, random_feasible_weights
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import TabularPolicy

from .mixture import (
    BaseEnsemble,
    MixtureWeights,
    check_feasible,
    compose,
    lambda_from_candidate,
    soft_improvement,
    state_only_weights,
    transform_f,
)
from .serializers import BaseEnsembleSerializer, MixtureWeightsSerializer


class BaseEnsembleTests(SimpleTestCase):

    def test_needs_two_bases(self):
        with self.assertRaises(ConstraintViolation):
            BaseEnsemble([TabularPolicy.uniform(2, 2)])

    def test_rejects_mismatched_shapes(self):
        with self.assertRaises(ConstraintViolation):
            BaseEnsemble([TabularPolicy.uniform(2, 2), TabularPolicy.uniform(3, 2)])

    def test_support_floor_lifts_zero_entries(self):
        greedy = TabularPolicy.deterministic([0, 1], 2)
        ensemble = BaseEnsemble([greedy, TabularPolicy.uniform(2, 2)], support_floor=1e-3)
        self.assertGreaterEqual(ensemble.base(1).probs.min(), 1e-3 - 1e-15)
        np.testing.assert_allclose(ensemble.base(1).probs.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_floor_keeps_bases(self):
        greedy = TabularPolicy.deterministic([0, 1], 2)
        ensemble = BaseEnsemble([greedy, TabularPolicy.uniform(2, 2)], support_floor=0.0)
        np.testing.assert_array_equal(ensemble.base(1).probs, greedy.probs)

    def test_base_index_is_one_based(self):
        ensemble = gen_random_ensemble(0, 3, 2, 3)
        self.assertIs(ensemble.base(3), ensemble.anchor())
        for j in (0, 4):
            with self.assertRaises(ConstraintViolation):
                ensemble.base(j)

    def test_reanchored_moves_base_to_last_slot(self):
        ensemble = gen_random_ensemble(1, 3, 2, 3)
        moved = ensemble.reanchored(1)
        np.testing.assert_array_equal(moved.anchor().probs, ensemble.base(1).probs)
        np.testing.assert_array_equal(moved.base(1).probs, ensemble.base(2).probs)
        self.assertIs(ensemble.reanchored(3), ensemble)


class FeasibilityTests(SimpleTestCase):

    def setUp(self):
        self.ensemble = gen_random_ensemble(2, 4, 3, 3)

    def test_zero_weights_are_feasible(self):
        report = check_feasible(self.ensemble, MixtureWeights.zeros(4, 3, 3))
        self.assertEqual((report.box, report.simplex, report.equality), (0.0, 0.0, 0.0))
        self.assertTrue(report.feasible)

    def test_box_violation_of_single_entry(self):
        lam = np.zeros((4, 3, 2))
        lam[1, 2, 0] = 1.2
        report = check_feasible(self.ensemble, MixtureWeights(lam))
        self.assertAlmostEqual(report.box, 0.2, places=12)
        self.assertFalse(report.feasible)

    def test_projected_weights_are_feasible(self):
        for seed in range(5):
            lam = random_feasible_weights(self.ensemble, seed)
            report = check_feasible(self.ensemble, lam)
            self.assertLessEqual(max(report.box, report.simplex, report.equality), 1e-9)

    def test_shape_mismatch_raises(self):
        with self.assertRaises(ConstraintViolation):
            check_feasible(self.ensemble, MixtureWeights.zeros(4, 3, 2))


class ComposeTests(SimpleTestCase):

    def test_zero_weights_return_anchor(self):
        ensemble = gen_random_ensemble(3, 4, 3, 3)
        policy = compose(ensemble, MixtureWeights.zeros(4, 3, 3))
        np.testing.assert_array_equal(policy.probs, ensemble.anchor().probs)

    def test_identical_bases_return_that_base(self):
        base = gen_random_policy(4, 4, 3)
        ensemble = BaseEnsemble([base, base, base])
        lam = random_feasible_weights(ensemble, 5)
        np.testing.assert_allclose(compose(ensemble, lam).probs, ensemble.base(1).probs,
                                   atol=1e-12)

    def test_rows_sum_to_one(self):
        ensemble = gen_random_ensemble(6, 5, 4, 3)
        for seed in range(5):
            lam = random_feasible_weights(ensemble, seed)
            probs = compose(ensemble, lam).probs
            manual = ensemble.anchor().probs.copy()
            for i in range(ensemble.m - 1):
                manual += lam.lam[:, :, i] * (ensemble.base(i + 1).probs - ensemble.anchor().probs)
            np.testing.assert_allclose(probs, manual, atol=1e-12)
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_infeasible_weights_name_worst_offender(self):
        ensemble = gen_random_ensemble(7, 2, 2, 2)
        lam = np.zeros((2, 2, 1))
        lam[0, 0, 0] = 1.5
        with self.assertRaises(ConstraintViolation) as ctx:
            compose(ensemble, MixtureWeights(lam))
        self.assertIn(ctx.exception.worst, ('box', 'simplex', 'equality'))


class TransformTests(SimpleTestCase):

    def test_anchor_index_appends_zero(self):
        np.testing.assert_allclose(transform_f([0.2, 0.3], 3), [0.2, 0.3, 0.0])

    def test_first_index_moves_remainder_to_anchor(self):
        np.testing.assert_allclose(transform_f([0.2, 0.3], 1), [0.0, 0.3, 0.5])

    def test_empty_mixture_maps_to_last_unit_vector(self):
        for j in (1, 2):
            np.testing.assert_allclose(transform_f([0.0, 0.0], j), [0.0, 0.0, 1.0])

    def test_broadcasts_over_leading_axes(self):
        lam = np.full((2, 3, 2), 0.25)
        out = transform_f(lam, 2)
        self.assertEqual(out.shape, (2, 3, 3))
        np.testing.assert_allclose(out[..., 1], 0.0)
        np.testing.assert_allclose(out[..., 2], 0.5)

    def test_out_of_range_index(self):
        with self.assertRaises(ConstraintViolation):
            transform_f([0.2, 0.3], 4)


class CandidateConfidenceTests(SimpleTestCase):

    def setUp(self):
        self.mu = TabularPolicy([[0.2, 0.8], [0.5, 0.5]])
        self.rho = TabularPolicy([[0.6, 0.4], [0.5, 0.5]])

    def test_candidate_equal_to_base(self):
        np.testing.assert_array_equal(lambda_from_candidate(self.mu, self.mu, self.rho), 0.0)

    def test_candidate_equal_to_rho(self):
        lam = lambda_from_candidate(self.rho, self.mu, self.rho)
        np.testing.assert_allclose(lam[0], 1.0)
        np.testing.assert_array_equal(lam[1], 0.0)

    def test_midpoint(self):
        midpoint = TabularPolicy((self.mu.probs + self.rho.probs) / 2)
        lam = lambda_from_candidate(midpoint, self.mu, self.rho)
        np.testing.assert_allclose(lam[0], 0.5, atol=1e-12)
        np.testing.assert_array_equal(lam[1], 0.0)


class HelperTests(SimpleTestCase):

    def test_state_only_weights_repeat_over_actions(self):
        weights = state_only_weights([0.1, 0.4], 3)
        self.assertEqual(weights.lam.shape, (2, 3, 1))
        np.testing.assert_allclose(weights.lam[1, :, 0], 0.4)

    def test_soft_improvement_without_step_is_identity(self):
        beta = gen_random_policy(8, 3, 4)
        w = np.random.default_rng(0).normal(size=(3, 4))
        np.testing.assert_allclose(soft_improvement(beta, w, eta=0.0).probs, beta.probs,
                                   atol=1e-12)

    def test_soft_improvement_shifts_mass_toward_positive_advantage(self):
        beta = TabularPolicy.uniform(1, 2)
        improved = soft_improvement(beta, [[1.0, -1.0]])
        self.assertGreater(improved.probs[0, 0], 0.5)
        self.assertAlmostEqual(improved.probs[0, 0], 1 / (1 + np.exp(-2.0)), places=12)

    def test_soft_improvement_keeps_zero_support(self):
        beta = TabularPolicy([[1.0, 0.0]])
        np.testing.assert_array_equal(soft_improvement(beta, [[0.0, 5.0]]).probs, [[1.0, 0.0]])


class SerializerTests(SimpleTestCase):

    def test_ensemble_document(self):
        ensemble = gen_random_ensemble(9, 3, 2, 2)
        serializer = BaseEnsembleSerializer(data=ensemble.to_dict())
        self.assertTrue(serializer.is_valid(), serializer.errors)
        np.testing.assert_array_equal(serializer.to_ensemble().probs, ensemble.probs)

    def test_ensemble_needs_two_bases(self):
        serializer = BaseEnsembleSerializer(data={'bases': [[[1.0]]]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('bases', serializer.errors)

    def test_ragged_weights_rejected(self):
        serializer = MixtureWeightsSerializer(data={'lam': [[[0.1]], [[0.1, 0.2]]]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('lam', serializer.errors)

    def test_weights_document(self):
        serializer = MixtureWeightsSerializer(data={'lam': [[[0.1], [0.2]]]})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.to_weights().m, 2)
