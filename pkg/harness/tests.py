import csv
import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework import serializers

from cpi_bounds.surrogates import VARIANTS
from mdp_core.exceptions import ConstraintViolation
from mdp_core.tabular import TabularPolicy, policy_value

from .commands import EXIT_CONFIG, EXIT_IO
from .experiments import run_experiment
from .generators import (
    ASK,
    SOOTHE,
    gen_batch,
    gen_mood_chain,
    gen_random_ensemble,
    gen_random_mdp,
    mood_chain_experts,
)
from .reporting import MetricsRow, read_metrics, report, write_metrics
from .serializers import ExperimentConfigSerializer


def validated_config(document):
    serializer = ExperimentConfigSerializer(data=document)
    if not serializer.is_valid():
        raise AssertionError(serializer.errors)
    return serializer.validated_data


BOUNDS_CONFIG = {
    'id': 'bounds-small',
    'kind': 'bounds',
    'env': {'generator': 'random', 'n_states': 3, 'n_actions': 2},
    'ensemble': {'m': 2},
    'trials': list(range(10)),
}


class GeneratorTests(SimpleTestCase):

    def test_random_mdp_is_seeded(self):
        first, second = gen_random_mdp(3, 4, 2), gen_random_mdp(3, 4, 2)
        np.testing.assert_array_equal(first.transition, second.transition)
        np.testing.assert_allclose(first.transition.sum(axis=2), 1.0, atol=1e-12)
        low, high = 2.0, 3.0
        rewards = gen_random_mdp(4, 4, 2, reward_range=(low, high)).reward
        self.assertTrue(np.all((rewards >= low) & (rewards <= high)))

    def test_mood_chain_without_slip(self):
        mdp = gen_mood_chain(5, slip=0.0, gamma=0.8)
        for s in range(5):
            self.assertEqual(mdp.transition[s, SOOTHE].argmax(), min(s + 1, 4))
            self.assertEqual(mdp.transition[s, ASK].argmax(), s)
        always_soothe = mood_chain_experts(mdp)[0]
        # the top level loops on compose_reward(1, [1]) = 0.75
        self.assertAlmostEqual(policy_value(mdp, always_soothe)[4], 0.75 / 0.2, places=10)

    def test_mood_chain_checks(self):
        with self.assertRaises(ConstraintViolation):
            gen_mood_chain(1)
        with self.assertRaises(ConstraintViolation):
            gen_mood_chain(5, slip=1.0)

    def test_mood_chain_experts(self):
        experts = mood_chain_experts(gen_mood_chain(4))
        self.assertEqual(len(experts), 3)
        np.testing.assert_array_equal(experts[2].probs[0], [0.5, 0.5, 0.0])

    def test_batch_follows_policy_and_restarts(self):
        mdp = gen_random_mdp(5, 4, 3)
        policy = TabularPolicy.deterministic([2, 1, 0, 2], 3)
        batch = gen_batch(mdp, policy, 23, horizon=4, seed=6, src=2)
        self.assertEqual(len(batch), 23)
        self.assertEqual(batch.source, 2)
        for k, item in enumerate(batch):
            self.assertEqual(item.a, policy.probs[item.s].argmax())
            if (k + 1) % 4 and k + 1 < len(batch):
                self.assertEqual(batch[k + 1].s, item.sp)


class ReportingTests(SimpleTestCase):

    def rows(self):
        return [
            MetricsRow('e', 0, 'gap', 0, 1.0), MetricsRow('e', 0, 'gap', 1, 3.0),
            MetricsRow('e', 1, 'gap', 0, 2.0), MetricsRow('e', 1, 'gap', 1, 5.0),
        ]

    def test_curve(self):
        out = report(self.rows(), 'curve')
        self.assertEqual([(row['iteration'], row['mean'], row['std'], row['n']) for row in out],
                         [(0, 1.5, 0.5, 2), (1, 4.0, 1.0, 2)])

    def test_summary_uses_final_iterations(self):
        out = report(self.rows(), 'summary')
        self.assertEqual(out, [{'metric': 'gap', 'iteration': 1, 'mean': 4.0, 'std': 1.0,
                                'n': 2}])

    def test_single_trial_has_zero_std(self):
        out = report([MetricsRow('e', 7, 'value', 0, 2.5)], 'summary')
        self.assertEqual(out[0]['std'], 0.0)

    def test_unknown_kind(self):
        with self.assertRaises(ConstraintViolation):
            report(self.rows(), 'histogram')

    def test_non_finite_values_rejected(self):
        with self.assertRaises(ConstraintViolation):
            MetricsRow('e', 0, 'gap', 0, float('nan'))

    def test_csv_round_trip(self):
        stream = io.StringIO()
        write_metrics(self.rows(), stream)
        stream.seek(0)
        self.assertEqual(read_metrics(stream), self.rows())

    def test_read_errors_carry_line_numbers(self):
        with self.assertRaises(serializers.ValidationError) as ctx:
            read_metrics(io.StringIO('trial,metric\n'))
        self.assertIn('line 1', ctx.exception.detail)
        text = 'experiment,trial,metric,iteration,value\ne,0,gap,0,1.0\ne,0,gap,1,abc\n'
        with self.assertRaises(serializers.ValidationError) as ctx:
            read_metrics(io.StringIO(text))
        self.assertIn('line 3', ctx.exception.detail)


class ExperimentTests(SimpleTestCase):

    def test_bounds_experiment_rows_and_rerun(self):
        config = validated_config(BOUNDS_CONFIG)
        with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
            result = run_experiment(config, first)
            rerun = run_experiment(config, second)
            self.assertEqual(result.summary['rows'], 50)
            self.assertEqual(result.metrics_path.read_bytes(), rerun.metrics_path.read_bytes())
            self.assertEqual(result.summary_path.read_bytes(), rerun.summary_path.read_bytes())
            self.assertIn('slack_cpi', result.summary['final'])

    def test_qp_experiment(self):
        config = validated_config({
            'id': 'qp-small', 'kind': 'qp',
            'env': {'generator': 'random', 'n_states': 3, 'n_actions': 2},
            'ensemble': {'m': 2}, 'method': {'n_transitions': 40}, 'trials': [0],
        })
        with tempfile.TemporaryDirectory() as out:
            summary = run_experiment(config, out).summary
        self.assertEqual(set(summary['final']), {'qp_objective', 'kkt_residual', 'fallback',
                                                 'min_curvature', 'true_improvement'})

    def test_manager_experiment(self):
        config = validated_config({
            'id': 'manager-small', 'kind': 'manager',
            'env': {'generator': 'mood_chain', 'n_levels': 3},
            'method': {'name': 'cql', 'steps': 20, 'n_transitions': 30, 'batch_size': 8},
            'trials': [0],
        })
        with tempfile.TemporaryDirectory() as out:
            result = run_experiment(config, out)
            with open(result.metrics_path, newline='') as stream:
                rows = read_metrics(stream)
        self.assertEqual({row.metric for row in rows},
                         {'oracle_value', 'return_estimate', 'bellman_residual', 'cql_gap',
                          'oracle_ratio'})

    def test_expert_experiment_improves_reward(self):
        config = validated_config({
            'id': 'expert-split', 'kind': 'expert',
            'expert': {'decoder': [[2.0], [-2.0]],
                       'label': {'kind': 'custom', 'params': {'values': [1.0, 0.0]}},
                       'primitive_steps': 5, 'steps': 10, 'lr': 0.5, 'n_samples': 200},
            'trials': [0, 1],
        })
        with tempfile.TemporaryDirectory() as out:
            result = run_experiment(config, out)
            with open(result.metrics_path, newline='') as stream:
                rows = read_metrics(stream)
        self.assertEqual({row.metric for row in rows},
                         {'primitive_loss', 'expected_reward', 'sampled_reward'})
        for trial in (0, 1):
            expected = [row for row in rows if row.trial == trial and row.metric == 'expected_reward']
            self.assertEqual([row.iteration for row in expected], [0, 10])
            self.assertGreater(expected[1].value, expected[0].value + 0.05)

    def test_expert_spec_validation(self):
        base = {'id': 'e', 'kind': 'expert', 'trials': [0]}
        serializer = ExperimentConfigSerializer(data=base)
        self.assertFalse(serializer.is_valid())
        self.assertIn('expert', serializer.errors)
        short_label = {**base, 'expert': {
            'decoder': [[1.0], [0.0], [-1.0]],
            'label': {'kind': 'custom', 'params': {'values': [1.0, 0.0]}}}}
        serializer = ExperimentConfigSerializer(data=short_label)
        self.assertFalse(serializer.is_valid())
        self.assertIn('label', serializer.errors['expert'])
        ragged = {**base, 'expert': {
            'decoder': [[1.0, 0.0], [0.0]],
            'label': {'kind': 'custom', 'params': {'values': [1.0, 0.0]}}}}
        self.assertFalse(ExperimentConfigSerializer(data=ragged).is_valid())

    def test_other_kinds_need_an_env(self):
        serializer = ExperimentConfigSerializer(data={'id': 'b', 'kind': 'bounds', 'trials': [0]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('env', serializer.errors)

    def test_train_loop_experiment(self):
        config = validated_config({
            'id': 'loop-small', 'kind': 'train_loop',
            'env': {'generator': 'random', 'n_states': 3, 'n_actions': 2},
            'method': {'steps': 4, 'n_transitions': 30, 'batch_size': 10, 'tau': 1.0},
            'trials': [0],
        })
        with tempfile.TemporaryDirectory() as out:
            result = run_experiment(config, out)
            with open(result.metrics_path, newline='') as stream:
                rows = read_metrics(stream)
        self.assertEqual({row.metric for row in rows},
                         {'behavior_return', 'return_estimate', 'qp_objective', 'kkt_residual',
                          'td_error', 'improvement'})
        returns = [row for row in rows if row.metric == 'return_estimate']
        self.assertEqual([row.iteration for row in returns], [1, 2, 3, 4])
        self.assertIn('improvement', result.summary['final'])

    def test_manager_experiment_needs_method_name(self):
        serializer = ExperimentConfigSerializer(data={
            'id': 'm', 'kind': 'manager', 'env': {'generator': 'mood_chain'}, 'trials': [0]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('method', serializer.errors)


class CommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write_json(self, name, document):
        path = self.dir / name
        path.write_text(json.dumps(document))
        return str(path)

    def test_pipeline(self):
        env = str(self.dir / 'env.json')
        call_command('gen_env', out=env, seed=1, n_states=3, n_actions=2)
        ensemble = self.write_json('ensemble.json', gen_random_ensemble(2, 3, 2, 2).to_dict())

        bounds = self.dir / 'bounds.csv'
        call_command('eval_bounds', env=env, ensemble=ensemble, out=str(bounds))
        self.assertEqual(len(bounds.read_text().splitlines()), 6)

        batch = str(self.dir / 'batch.jsonl')
        call_command('gen_batch', env=env, n=40, src=2, out=batch)
        solution = self.dir / 'lambda.json'
        call_command('opt_lambda', env=env, ensemble=ensemble, batch=batch, advantage='exact',
                     out=str(solution))
        document = json.loads(solution.read_text())
        self.assertEqual(np.array(document['lam']).shape, (3, 2, 1))
        self.assertIn(document['method'], ('kkt-closed-form', 'projected-gradient'))
        self.assertIn(document['path'], ('fixed-point', 'active-set', 'projected-gradient'))

        call_command('opt_lambda', env=env, ensemble=ensemble, batch=batch, advantage='exact',
                     kkt_method='active-set', out=str(solution))
        active = json.loads(solution.read_text())
        self.assertIn(active['path'], ('active-set', 'projected-gradient'))
        if 'projected-gradient' not in (document['path'], active['path']):
            self.assertAlmostEqual(active['objective'], document['objective'], places=6)

    def test_eval_bounds_csv_and_difference_report(self):
        env = str(self.dir / 'chain.json')
        call_command('gen_env', out=env, seed=4, n_states=4, n_actions=3)
        ensemble = self.write_json('ensemble.json', gen_random_ensemble(5, 4, 3, 3).to_dict())
        difference = self.dir / 'difference.json'
        stdout = io.StringIO()
        call_command('eval_bounds', env=env, ensemble=ensemble, seed=7,
                     difference=str(difference), stdout=stdout)

        rows = list(csv.DictReader(io.StringIO(stdout.getvalue())))
        self.assertEqual(stdout.getvalue().splitlines()[0],
                         'instance_id,variant,bound,true_diff,slack')
        self.assertEqual([row['variant'] for row in rows], list(VARIANTS))
        for row in rows:
            self.assertEqual(row['instance_id'], 'chain-7')
            self.assertAlmostEqual(float(row['slack']),
                                   float(row['true_diff']) - float(row['bound']), places=9)

        document = json.loads(difference.read_text())
        self.assertEqual(document['instance_id'], 'chain-7')
        self.assertEqual(len(document['exact']), 4)
        self.assertLess(document['max_discrepancy'], 1e-8)

    def test_eval_bounds_named_instance(self):
        env = str(self.dir / 'env.json')
        call_command('gen_env', out=env, seed=1, n_states=3, n_actions=2)
        ensemble = self.write_json('ensemble.json', gen_random_ensemble(2, 3, 2, 2).to_dict())
        stdout = io.StringIO()
        call_command('eval_bounds', env=env, ensemble=ensemble, instance_id='case-a',
                     stdout=stdout)
        rows = list(csv.DictReader(io.StringIO(stdout.getvalue())))
        self.assertEqual({row['instance_id'] for row in rows}, {'case-a'})

    def test_option_defaults_from_config(self):
        options = self.write_json('options.json', {'n_states': 2, 'n_actions': 2})
        env = self.dir / 'env.json'
        call_command('gen_env', config=options, out=str(env))
        self.assertEqual(json.loads(env.read_text())['n_states'], 2)

    def test_unknown_option_is_a_config_error(self):
        options = self.write_json('options.json', {'colour': 'red'})
        with self.assertRaises(CommandError) as ctx:
            call_command('gen_env', config=options, stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_run_rejects_unknown_experiment_keys(self):
        config = self.write_json('experiment.json', {**BOUNDS_CONFIG, 'colour': 'red'})
        with self.assertRaises(CommandError) as ctx:
            call_command('run', config=config, out=str(self.dir), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_run_needs_config(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('run', stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_CONFIG)

    def test_missing_file_is_an_io_error(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('run', config=str(self.dir / 'missing.json'), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_IO)

    def test_malformed_json_is_an_io_error(self):
        env = self.dir / 'env.json'
        env.write_text('{"n_states": ')
        with self.assertRaises(CommandError) as ctx:
            call_command('eval_bounds', env=str(env), ensemble=str(env), stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_IO)

    def test_run_then_report(self):
        config = self.write_json('experiment.json', {**BOUNDS_CONFIG, 'trials': [0, 1]})
        stdout = io.StringIO()
        call_command('run', config=config, out=str(self.dir), stdout=stdout)
        self.assertEqual(json.loads(stdout.getvalue())['rows'], 10)
        summary = self.dir / 'summary.csv'
        call_command('report', metrics=str(self.dir / 'bounds-small_metrics.csv'),
                     kind='summary', out=str(summary))
        lines = summary.read_text().splitlines()
        self.assertEqual(lines[0], 'metric,iteration,mean,std,n')
        self.assertEqual(len(lines), 6)
