import numpy as np
from django.test import SimpleTestCase

from harness.generators import gen_random_ensemble, gen_random_mdp, gen_random_policy, random_feasible_weights
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import FiniteMdp, TabularPolicy, policy_reward, policy_transition
from moe_policy.mixture import BaseEnsemble, MixtureWeights, compose

from .identities import (
    diff_exact,
    diff_via_base_advantage,
    diff_via_mixture_advantage,
    difference_report,
    modified_kernel,
)


class DifferenceIdentityTests(SimpleTestCase):

    def setUp(self):
        self.mdp = gen_random_mdp(0, 6, 3, gamma=0.9)
        self.ensemble = gen_random_ensemble(1, 6, 3, 3)
        self.lam = random_feasible_weights(self.ensemble, 2)
        self.zeros = MixtureWeights.zeros(6, 3, 3)

    def test_zero_weights_give_zero_difference(self):
        for op in (diff_exact, diff_via_mixture_advantage, diff_via_base_advantage):
            np.testing.assert_allclose(op(self.mdp, self.ensemble, self.zeros), 0.0, atol=1e-12)

    def test_identical_bases_give_zero_difference(self):
        base = gen_random_policy(3, 6, 3)
        ensemble = BaseEnsemble([base, base])
        lam = random_feasible_weights(ensemble, 4)
        np.testing.assert_allclose(diff_exact(self.mdp, ensemble, lam), 0.0, atol=1e-12)

    def test_advantage_forms_match_exact(self):
        for seed in range(5):
            lam = random_feasible_weights(self.ensemble, seed)
            report = difference_report(self.mdp, self.ensemble, lam)
            self.assertLessEqual(report.max_discrepancy, 1e-8)

    def test_reanchoring_on_another_base(self):
        moved = self.ensemble.reanchored(1)
        lam = random_feasible_weights(moved, 5)
        exact = diff_exact(self.mdp, self.ensemble, lam, p=1)
        np.testing.assert_allclose(diff_via_base_advantage(self.mdp, self.ensemble, lam, p=1),
                                   exact, atol=1e-8)
        np.testing.assert_allclose(diff_via_mixture_advantage(self.mdp, self.ensemble, lam, p=1),
                                   exact, atol=1e-8)

    def test_single_state_closed_form(self):
        mdp = FiniteMdp(np.ones((1, 2, 1)), [[1.0, 0.0]], 0.5, [1.0])
        ensemble = BaseEnsemble([TabularPolicy([[0.9, 0.1]]), TabularPolicy([[0.3, 0.7]])])
        lam = MixtureWeights([[[0.5], [0.5]]])
        mixture = compose(ensemble, lam)
        expected = (policy_reward(mdp, mixture) - policy_reward(mdp, ensemble.anchor())) / 0.5
        np.testing.assert_allclose(diff_via_mixture_advantage(mdp, ensemble, lam), expected,
                                   atol=1e-12)

    def test_action_independent_reward_has_no_base_advantage(self):
        transition = np.full((3, 2, 3), 1 / 3)
        mdp = FiniteMdp(transition, np.repeat([[0.2], [0.5], [1.0]], 2, axis=1), 0.8,
                        np.full(3, 1 / 3))
        ensemble = gen_random_ensemble(6, 3, 2, 2)
        lam = random_feasible_weights(ensemble, 7)
        np.testing.assert_allclose(diff_via_base_advantage(mdp, ensemble, lam), 0.0, atol=1e-12)

    def test_anchor_without_support_is_rejected(self):
        ensemble = BaseEnsemble([TabularPolicy.uniform(6, 3),
                                 TabularPolicy.deterministic([0] * 6, 3)], support_floor=0.0)
        with self.assertRaises(ConstraintViolation):
            diff_via_mixture_advantage(self.mdp, ensemble, MixtureWeights.zeros(6, 3, 2))


class ModifiedKernelTests(SimpleTestCase):

    def setUp(self):
        self.mdp = gen_random_mdp(10, 5, 3, gamma=0.8)
        self.ensemble = gen_random_ensemble(11, 5, 3, 3)

    def test_zero_weights_leave_anchor_kernel(self):
        delta, kernel = modified_kernel(self.mdp, self.ensemble, MixtureWeights.zeros(5, 3, 3))
        np.testing.assert_array_equal(delta, 0.0)
        np.testing.assert_allclose(kernel, policy_transition(self.mdp, self.ensemble.anchor()))

    def test_kernel_matches_composed_policy(self):
        lam = random_feasible_weights(self.ensemble, 12)
        delta, kernel = modified_kernel(self.mdp, self.ensemble, lam)
        np.testing.assert_allclose(kernel.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(delta.sum(axis=1), 0.0, atol=1e-10)
        direct = policy_transition(self.mdp, compose(self.ensemble, lam))
        np.testing.assert_allclose(kernel, direct, atol=1e-12)

    def test_report_document(self):
        lam = random_feasible_weights(self.ensemble, 13)
        document = difference_report(self.mdp, self.ensemble, lam).to_dict()
        self.assertEqual(set(document), {'exact', 'via_mixture_adv', 'via_base_adv',
                                         'max_discrepancy'})
        self.assertEqual(len(document['exact']), 5)
