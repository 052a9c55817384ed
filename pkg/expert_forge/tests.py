import numpy as np
from django.test import SimpleTestCase

from mdp_core.exceptions import ConstraintViolation

from .labels import (
    LAMBDA1,
    LabelFunction,
    compose_reward,
    cosine_labels,
    question_label,
    sentiment_combine,
)
from .latent import (
    GaussianLatent,
    PosteriorModel,
    ToyDecoder,
    expected_label,
    fit_primitive,
    gaussian_kl,
    latent_policy,
    output_distribution,
    reinforce_step,
    score_gradient,
)
from .serializers import GaussianLatentSerializer, LabelFunctionSerializer


def split_decoder():
    """Two outputs: Psi(0|z) = sigmoid(4z)"""
    return ToyDecoder([[2.0], [-2.0]])


class LabelTests(SimpleTestCase):

    def test_question_label(self):
        self.assertEqual(question_label(['what', 'time', '?']), 1)
        self.assertEqual(question_label(['What', 'time', '?']), 1)
        self.assertEqual(question_label(['what', 'time']), 0)
        self.assertEqual(question_label(['time', '?']), 0)
        self.assertEqual(question_label([]), 0)

    def test_sentiment_combine(self):
        self.assertAlmostEqual(sentiment_combine([0, 0, 1, 0, 0, 0]), 0.5)
        self.assertAlmostEqual(sentiment_combine([0, 0, 0, 1, 0, 0]), 1.0)
        self.assertAlmostEqual(sentiment_combine([0, 0, 0, 0, 1, 0]), -1.0)
        with self.assertRaises(ConstraintViolation):
            sentiment_combine([1, 2, 3])

    def test_cosine_labels(self):
        np.testing.assert_allclose(cosine_labels([1, 0], [2, 0]), (1.0, -1.0))
        self.assertEqual(cosine_labels([0, 0], [1, 1]), (0.0, 0.0))
        np.testing.assert_allclose(cosine_labels([1, 1], [-3, -3]), (-1.0, 1.0))

    def test_compose_reward(self):
        self.assertAlmostEqual(compose_reward(1.0, [0.0]), 1.0)
        self.assertAlmostEqual(compose_reward(0.0, [1.0]), -0.25)
        # history weights [2/3, 1/3] at gamma 0.5
        self.assertAlmostEqual(compose_reward(0.0, [1.0, 0.0], gamma=0.5), -0.25 * 2 / 3)

    def test_constant_history_leaves_level_term(self):
        self.assertAlmostEqual(compose_reward(0.4, [0.4] * 4, gamma=0.8), LAMBDA1 * 0.4)

    def test_compose_reward_checks(self):
        with self.assertRaises(ConstraintViolation):
            compose_reward(0.0, [])
        with self.assertRaises(ConstraintViolation):
            compose_reward(0.0, [1.0], gamma=1.0)

    def test_label_function_dispatch(self):
        vocabulary = [['how', '?'], ['fine']]
        self.assertEqual(LabelFunction('question', {'vocabulary': vocabulary})(0), 1.0)
        self.assertEqual(LabelFunction('question', {'vocabulary': vocabulary})(1), 0.0)
        features = {'context': [1.0, 0.0], 'features': [[1.0, 0.0], [0.0, 1.0]]}
        self.assertAlmostEqual(LabelFunction('sentiment-coherence', features)(0), 1.0)
        self.assertAlmostEqual(LabelFunction('exploration', features)(0), -1.0)
        self.assertEqual(LabelFunction('custom', {'values': [0.0, 2.5]})(1), 2.5)
        with self.assertRaises(ConstraintViolation):
            LabelFunction('toxicity')


class ScoreFunctionTests(SimpleTestCase):

    def test_gradient_at_mean(self):
        grad_mean, grad_std = score_gradient(np.array([1.0, -2.0]), np.array([1.0, -2.0]),
                                             np.array([0.5, 2.0]))
        np.testing.assert_array_equal(grad_mean, 0.0)
        np.testing.assert_allclose(grad_std, [-2.0, -0.5])

    def test_gradient_matches_finite_differences(self):
        z, mean, std, h = 0.7, 0.2, 1.3, 1e-6

        def log_density(m, s):
            return -0.5 * ((z - m) / s) ** 2 - np.log(s)

        grad_mean, grad_std = score_gradient(z, mean, std)
        self.assertAlmostEqual(grad_mean, (log_density(mean + h, std)
                                           - log_density(mean - h, std)) / (2 * h), places=6)
        self.assertAlmostEqual(grad_std, (log_density(mean, std + h)
                                          - log_density(mean, std - h)) / (2 * h), places=6)


class ReinforceTests(SimpleTestCase):

    def setUp(self):
        self.decoder = split_decoder()
        self.label = LabelFunction('custom', {'values': [1.0, 0.0]})

    def test_zero_learning_rate_keeps_parameters(self):
        g = GaussianLatent.standard(2, 1)
        updated, _ = reinforce_step(g, self.decoder, [0, 1], self.label, 16, 0.0, seed=0)
        np.testing.assert_array_equal(updated.mean, g.mean)
        np.testing.assert_array_equal(updated.std, g.std)

    def test_argument_checks(self):
        g = GaussianLatent.standard(1, 1)
        with self.assertRaises(ConstraintViolation):
            reinforce_step(g, self.decoder, [0], self.label, 16, -0.1, seed=0)
        with self.assertRaises(ConstraintViolation):
            reinforce_step(g, self.decoder, [0], self.label, 1, 0.1, seed=0)

    def test_steps_raise_expected_label(self):
        g = GaussianLatent.standard(1, 1)
        before = expected_label(g, self.decoder, 0, self.label)
        self.assertAlmostEqual(before, 0.5, places=8)
        for step in range(10):
            g, _ = reinforce_step(g, self.decoder, [0], self.label, 200, 0.5, seed=step)
        self.assertGreater(expected_label(g, self.decoder, 0, self.label), before + 0.1)
        self.assertTrue(np.all(g.std >= g.sigma_min))


class PrimitiveFitTests(SimpleTestCase):

    def setUp(self):
        self.decoder = split_decoder()
        self.corpus = [(0, 0), (0, 1)]

    def test_gaussian_kl(self):
        self.assertEqual(gaussian_kl(([0.3, -1.0], [1.0, 2.0]), ([0.3, -1.0], [1.0, 2.0])), 0.0)
        self.assertAlmostEqual(gaussian_kl(([1.0, 2.0], [1.0, 1.0]), ([0.0, 0.0], [1.0, 1.0])),
                               2.5)

    def test_zero_steps_return_copies(self):
        rho, g0 = PosteriorModel.standard(1, 2, 1), GaussianLatent.standard(1, 1)
        fitted, prior, trace = fit_primitive(rho, g0, self.decoder, self.corpus, 1.0, 0.1, 0,
                                             seed=0)
        self.assertEqual(trace, [])
        np.testing.assert_array_equal(fitted.mean, rho.mean)
        self.assertIsNot(prior, g0)

    def test_reconstruction_only_fit(self):
        rho, g0 = PosteriorModel.standard(1, 2, 1), GaussianLatent.standard(1, 1)
        fitted, _, trace = fit_primitive(rho, g0, self.decoder, self.corpus, 0.0, 0.5, 300,
                                         seed=1)
        self.assertLess(trace[-1], np.log(2.0))
        self.assertLess(trace[-1], trace[0])
        self.assertGreater(fitted.mean[0, 0, 0], 0.0)
        self.assertLess(fitted.mean[0, 1, 0], 0.0)

    def test_heavy_penalty_collapses_posteriors_onto_prior(self):
        rho = PosteriorModel(np.array([[[1.0], [-1.0]]]), np.ones((1, 2, 1)))
        g0 = GaussianLatent.standard(1, 1)
        fitted, prior, _ = fit_primitive(rho, g0, self.decoder, self.corpus, 1e6, 1e-7, 400,
                                         seed=2)
        total = sum(gaussian_kl(fitted.params(0, y), (prior.mean[0], prior.std[0]))
                    for y in (0, 1))
        self.assertLessEqual(total, 1e-3)

    def test_negative_penalty_rejected(self):
        with self.assertRaises(ConstraintViolation):
            fit_primitive(PosteriorModel.standard(1, 2, 1), GaussianLatent.standard(1, 1),
                          self.decoder, self.corpus, -1.0, 0.1, 1, seed=0)


class InducedPolicyTests(SimpleTestCase):

    def test_symmetric_decoder_is_even_at_zero_mean(self):
        g = GaussianLatent.standard(1, 1)
        np.testing.assert_allclose(output_distribution(g, split_decoder(), 0), [0.5, 0.5],
                                   atol=1e-10)

    def test_latent_policy_rows(self):
        g = GaussianLatent([[1.0], [-1.0]], [[0.5], [0.5]])
        policy = latent_policy(g, split_decoder())
        np.testing.assert_allclose(policy.probs.sum(axis=1), 1.0, atol=1e-12)
        self.assertGreater(policy.probs[0, 0], 0.5)
        self.assertLess(policy.probs[1, 0], 0.5)
        sampled = latent_policy(g, split_decoder(), seed=3, n_samples=4000)
        np.testing.assert_allclose(sampled.probs, policy.probs, atol=0.05)

    def test_decoder_shape(self):
        with self.assertRaises(ConstraintViolation):
            ToyDecoder([1.0, 2.0])


class SerializerTests(SimpleTestCase):

    def test_latent_document(self):
        g = GaussianLatent([[0.5, -0.5]], [[1.0, 0.2]])
        serializer = GaussianLatentSerializer(data=g.to_dict())
        self.assertTrue(serializer.is_valid(), serializer.errors)
        np.testing.assert_array_equal(serializer.to_latent().std, g.std)

    def test_latent_std_floor(self):
        document = GaussianLatent.standard(1, 2).to_dict()
        document['std'] = [[1.0, 0.0]]
        serializer = GaussianLatentSerializer(data=document)
        self.assertFalse(serializer.is_valid())
        self.assertIn('std', serializer.errors)

    def test_label_document(self):
        serializer = LabelFunctionSerializer(data={'kind': 'custom', 'params': {'values': [1, 0]}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.to_label()(0), 1.0)
        self.assertFalse(LabelFunctionSerializer(data={'kind': 'sarcasm'}).is_valid())
