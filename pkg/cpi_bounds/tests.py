import numpy as np
from django.test import SimpleTestCase

from harness.generators import gen_random_ensemble, gen_random_mdp, gen_random_policy, random_feasible_weights
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import TabularPolicy, expected_return, policy_transition, policy_value
from moe_policy.mixture import BaseEnsemble, MixtureWeights, compose, transform_f

from .surrogates import (
    SurrogateTerms,
    VARIANTS,
    alpha_combined_bound,
    cpi_lower_bound,
    cpi_report,
    evaluate_bounds,
    kl_rows,
    pinsker_bound,
    surrogate_terms,
    trpo_bound,
)


def instance(seed, n_states=5, n_actions=3, m=3, gamma=0.9):
    mdp = gen_random_mdp(seed, n_states, n_actions, gamma=gamma)
    ensemble = gen_random_ensemble(seed + 1000, n_states, n_actions, m)
    return mdp, ensemble, random_feasible_weights(ensemble, seed + 2000)


class SurrogateTermTests(SimpleTestCase):

    def test_zero_weights_zero_terms(self):
        mdp, ensemble, _ = instance(0)
        terms = surrogate_terms(mdp, ensemble, MixtureWeights.zeros(5, 3, 3))
        self.assertEqual((terms.l1, terms.l2, terms.l3_max, terms.l4), (0.0, 0.0, 0.0, 0.0))

    def test_identical_bases_have_no_penalty(self):
        mdp = gen_random_mdp(1, 4, 3)
        base = gen_random_policy(2, 4, 3)
        ensemble = BaseEnsemble([base, base, base])
        terms = surrogate_terms(mdp, ensemble, random_feasible_weights(ensemble, 3))
        self.assertEqual(terms.l2, 0.0)
        self.assertEqual(terms.l3_max, 0.0)

    def test_term_ordering(self):
        for seed in range(5):
            mdp, ensemble, lam = instance(seed)
            terms = surrogate_terms(mdp, ensemble, lam)
            self.assertGreaterEqual(terms.l2, 0.0)
            self.assertTrue(np.all(terms.l3_per_s0 >= 0.0))
            self.assertGreaterEqual(terms.l3_max, terms.l4 - 1e-15)
            self.assertGreaterEqual(terms.l4, 0.0)

    def test_penalty_weight_matches_truncated_series(self):
        mdp, ensemble, lam = instance(4)
        j = ensemble.m
        weights = transform_f(lam.lam, j)
        shift = np.abs(np.moveaxis(ensemble.probs - ensemble.probs[j - 1], 0, -1))
        per_state = (weights * shift).sum(axis=(1, 2))
        kernel = policy_transition(mdp, ensemble.base(j))
        row, brute = mdp.initial_dist.copy(), 0.0
        for t in range(400):
            brute += (1 - mdp.gamma) * mdp.gamma ** t * row @ per_state
            row = row @ kernel
        self.assertAlmostEqual(surrogate_terms(mdp, ensemble, lam).l2, brute, delta=1e-7)


class CpiBoundTests(SimpleTestCase):

    def test_zero_terms(self):
        terms = SurrogateTerms(0.0, 0.0, 0.0, np.zeros(3), 0.0)
        self.assertEqual(cpi_lower_bound(terms, 0.9), 0.0)

    def test_hand_computed_value(self):
        terms = SurrogateTerms(l1=1.0, l2=0.5, l3_max=2.0, l3_per_s0=np.array([2.0, 1.0]), l4=1.0)
        # (1 - (0.5 / 0.5) * 0.5 * 2) / 0.5
        self.assertAlmostEqual(cpi_lower_bound(terms, 0.5), 0.0)
        self.assertAlmostEqual(cpi_lower_bound(terms, 0.5, use_max_l3=False), 1.0)

    def test_tight_at_anchor(self):
        mdp, ensemble, _ = instance(5)
        report = cpi_report(mdp, ensemble, MixtureWeights.zeros(5, 3, 3))
        self.assertAlmostEqual(report.bound, 0.0, places=12)
        self.assertAlmostEqual(report.true_diff, 0.0, places=12)

    def test_max_form_lower_bounds_the_gap(self):
        for seed in range(25):
            mdp, ensemble, lam = instance(seed, m=2 + seed % 2)
            report = cpi_report(mdp, ensemble, lam)
            self.assertEqual(report.variant, 'cpi')
            self.assertGreaterEqual(report.slack, -1e-10, f'seed {seed}')

    def test_mean_form_never_below_max_form(self):
        mdp, ensemble, lam = instance(6)
        loose = cpi_report(mdp, ensemble, lam, use_max_l3=False)
        self.assertEqual(loose.variant, 'cpi-mean-l3')
        self.assertGreaterEqual(loose.bound, cpi_report(mdp, ensemble, lam).bound)


class AlphaCombinedTests(SimpleTestCase):

    def test_point_mass_reduces_to_single_anchor(self):
        mdp, ensemble, lam = instance(7)
        for j in range(1, ensemble.m + 1):
            alpha = np.eye(ensemble.m)[j - 1]
            terms = surrogate_terms(mdp, ensemble, lam, j)
            expected = (expected_return(mdp, ensemble.base(j))
                        + cpi_lower_bound(terms, mdp.gamma, use_max_l3=False))
            report = alpha_combined_bound(mdp, ensemble, lam, alpha)
            self.assertAlmostEqual(report.bound, expected, places=10)

    def test_identical_bases_at_zero_weights(self):
        mdp = gen_random_mdp(8, 4, 3)
        base = gen_random_policy(9, 4, 3)
        ensemble = BaseEnsemble([base, base, base])
        report = alpha_combined_bound(mdp, ensemble, MixtureWeights.zeros(4, 3, 3),
                                      np.full(3, 1 / 3))
        self.assertAlmostEqual(report.bound, expected_return(mdp, base), places=10)
        self.assertAlmostEqual(report.true_diff, expected_return(mdp, base), places=10)

    def test_lower_bounds_mixture_return(self):
        for seed in range(10):
            mdp, ensemble, lam = instance(seed + 50)
            report = alpha_combined_bound(mdp, ensemble, lam, np.full(ensemble.m, 1 / ensemble.m))
            self.assertGreaterEqual(report.slack, -1e-10, f'seed {seed}')

    def test_rejects_off_simplex_alpha(self):
        mdp, ensemble, lam = instance(10)
        for alpha in ([0.5, 0.5, 0.5], [1.2, -0.2, 0.0], [0.5, 0.5]):
            with self.assertRaises(ConstraintViolation):
                alpha_combined_bound(mdp, ensemble, lam, alpha)


class TrpoBoundTests(SimpleTestCase):

    def test_mixture_value_baseline_is_tight(self):
        for seed in range(5):
            mdp, ensemble, lam = instance(seed + 20)
            w = policy_value(mdp, compose(ensemble, lam))
            report = trpo_bound(mdp, ensemble, lam, w)
            self.assertAlmostEqual(report.bound, report.true_diff, delta=1e-8)

    def test_zero_weights(self):
        mdp, ensemble, _ = instance(11)
        report = trpo_bound(mdp, ensemble, MixtureWeights.zeros(5, 3, 3), np.zeros(5))
        self.assertAlmostEqual(report.bound, 0.0, places=12)
        self.assertAlmostEqual(report.true_diff, 0.0, places=12)

    def test_max_reduction_lower_bounds_the_gap(self):
        for seed in range(25):
            mdp, ensemble, lam = instance(seed + 30, gamma=0.5 + 0.4 * (seed % 2))
            for w in (np.zeros(mdp.n_states), policy_value(mdp, ensemble.anchor())):
                report = trpo_bound(mdp, ensemble, lam, w, action_reduction='max')
                self.assertGreaterEqual(report.slack, -1e-10, f'seed {seed}')

    def test_unknown_reduction(self):
        mdp, ensemble, lam = instance(12)
        with self.assertRaises(ConstraintViolation):
            trpo_bound(mdp, ensemble, lam, np.zeros(5), action_reduction='median')


class PinskerBoundTests(SimpleTestCase):

    def test_zero_weights(self):
        mdp, ensemble, _ = instance(13)
        self.assertAlmostEqual(pinsker_bound(mdp, ensemble, MixtureWeights.zeros(5, 3, 3)).bound,
                               0.0, places=12)

    def test_identical_bases(self):
        mdp = gen_random_mdp(14, 4, 3)
        base = gen_random_policy(15, 4, 3)
        ensemble = BaseEnsemble([base, base])
        report = pinsker_bound(mdp, ensemble, random_feasible_weights(ensemble, 16))
        self.assertAlmostEqual(report.bound, 0.0, places=12)

    def test_below_mean_form_for_two_bases(self):
        for seed in range(20):
            mdp, ensemble, lam = instance(seed + 60, m=2)
            relaxed = pinsker_bound(mdp, ensemble, lam).bound
            self.assertLessEqual(relaxed, cpi_report(mdp, ensemble, lam, use_max_l3=False).bound
                                 + 1e-9, f'seed {seed}')

    def test_kl_requires_support(self):
        with self.assertRaises(ConstraintViolation):
            kl_rows(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(kl_rows(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])),
                                   [np.log(2.0)])


class BoundValiditySweepTests(SimpleTestCase):
    """Seeded feasible instances with two to four bases and mixed discounts"""

    def sweep(self, n_seeds):
        for seed in range(n_seeds):
            mdp, ensemble, lam = instance(seed + 300, n_states=3 + seed % 4,
                                          n_actions=2 + seed % 3, m=2 + seed % 3,
                                          gamma=(0.5, 0.8, 0.9)[seed % 3])
            yield seed, mdp, ensemble, lam

    def test_mean_reduction_lower_bounds_the_gap(self):
        for seed, mdp, ensemble, lam in self.sweep(200):
            baselines = {
                'zero': np.zeros(mdp.n_states),
                'anchor': policy_value(mdp, ensemble.anchor()),
                'mixture': policy_value(mdp, compose(ensemble, lam)),
            }
            for name, w in baselines.items():
                report = trpo_bound(mdp, ensemble, lam, w, action_reduction='mean')
                self.assertGreaterEqual(report.slack, -1e-10, f'seed {seed} baseline {name}')
                loose = trpo_bound(mdp, ensemble, lam, w, action_reduction='max')
                self.assertLessEqual(loose.bound, report.bound + 1e-12)

    def test_max_form_cpi(self):
        for seed, mdp, ensemble, lam in self.sweep(200):
            self.assertGreaterEqual(cpi_report(mdp, ensemble, lam).slack, -1e-10, f'seed {seed}')

    def test_alpha_combined(self):
        for seed, mdp, ensemble, lam in self.sweep(200):
            for alpha in (np.full(ensemble.m, 1 / ensemble.m), np.eye(ensemble.m)[-1]):
                report = alpha_combined_bound(mdp, ensemble, lam, alpha)
                self.assertGreaterEqual(report.slack, -1e-10, f'seed {seed}')


class EvaluateBoundsTests(SimpleTestCase):

    def test_one_report_per_variant(self):
        mdp, ensemble, lam = instance(17)
        reports = evaluate_bounds(mdp, ensemble, lam)
        self.assertEqual(tuple(report.variant for report in reports), VARIANTS)
        for report in reports:
            self.assertEqual(set(report.to_dict()), {'bound', 'true_diff', 'slack', 'variant'})
            self.assertAlmostEqual(report.slack, report.true_diff - report.bound, places=12)

    def test_base_without_support_is_rejected(self):
        mdp = gen_random_mdp(18, 3, 2)
        ensemble = BaseEnsemble([TabularPolicy.deterministic([0, 0, 0], 2),
                                 TabularPolicy.uniform(3, 2)], support_floor=0.0)
        with self.assertRaises(ConstraintViolation):
            evaluate_bounds(mdp, ensemble, MixtureWeights.zeros(3, 2, 2))
