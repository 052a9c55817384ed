"""
Experiment orchestration: one seeded trial per entry of `trials`, each
emitting MetricsRow records, then a metrics CSV plus a JSON summary.
"""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from django.conf import settings

from cpi_bounds.surrogates import evaluate_bounds
from critic_hybrid.critics import HybridCriticConfig, hybrid_fixed_point, q_learning_batch, sarsa_batch
from expert_forge.labels import compose_reward
from expert_forge.latent import (
    GaussianLatent,
    PosteriorModel,
    ToyDecoder,
    expected_label,
    fit_primitive,
    reinforce_step,
)
from manager_rl.learners import (
    batch_bellman_residual,
    cql_gap,
    cql_manager,
    dqn_manager,
    greedy_selector,
    mbrl_manager,
)
from manager_rl.moe_env import MoeEnv, collect_manager_batch
from manager_rl.oracle import manager_value, oracle_manager
from manager_rl.train_loop import TrainLoopConfig, train_loop
from mdp_core.tabular import (
    TabularPolicy,
    advantage,
    expected_return,
    policy_q,
    value_iteration,
)
from mixture_qp.fitting import estimate_advantage_from_batch, lambda_tabular
from mixture_qp.saa import assemble_qp, build_saa
from mixture_qp.solvers import FIXED_POINT, PG_METHOD, project_feasible, solve_kkt
from moe_policy.mixture import compose

from .generators import (
    gen_batch,
    gen_mood_chain,
    gen_random_ensemble,
    gen_random_mdp,
    gen_random_policy,
    mood_chain_experts,
    random_feasible_weights,
)
from .reporting import MetricsRow, write_metrics

logger = logging.getLogger(__name__)


def toolkit_setting(name):
    return settings.MOE_TOOLKIT[name]


@dataclass(frozen=True)
class ExperimentResult:
    metrics_path: Path
    summary_path: Path
    summary: dict


def build_env(env_cfg, seed):
    if env_cfg['generator'] == 'mood_chain':
        return gen_mood_chain(env_cfg['n_levels'], env_cfg['slip'], env_cfg['gamma'])
    return gen_random_mdp(seed, env_cfg['n_states'], env_cfg['n_actions'],
                          gamma=env_cfg['gamma'], reward_range=tuple(env_cfg['reward_range']))


def _bounds_trial(config, seed, mdp):
    ens_cfg = config['ensemble']
    ensemble = gen_random_ensemble(seed + 1, mdp.n_states, mdp.n_actions, ens_cfg['m'],
                                   support_floor=ens_cfg['support_floor'])
    lam = random_feasible_weights(ensemble, seed + 2)
    alpha = np.array(ens_cfg['alpha']) if ens_cfg.get('alpha') else None
    reports = evaluate_bounds(mdp, ensemble, lam, alpha=alpha)
    return [MetricsRow(config['id'], seed, f'slack_{report.variant}', 0, report.slack)
            for report in reports]


def solve_from_batches(mdp, ensemble, batches, alpha, advantage_kind='exact', lr=0.1, epochs=100,
                       kkt_method=FIXED_POINT):
    """SAA over per-anchor batches, then solve_kkt; returns (solution, MixtureWeights, qp)"""
    advantages = {}
    for j, batch in batches.items():
        base = ensemble.base(j)
        if advantage_kind == 'batch':
            advantages[j] = estimate_advantage_from_batch(batch, base, mdp.gamma, lr=lr,
                                                          epochs=epochs).table
        else:
            advantages[j] = advantage(mdp, base)
    saa = build_saa(batches, ensemble, advantages, alpha, mdp.gamma)
    qp = assemble_qp(saa)
    solution = solve_kkt(qp, tol=toolkit_setting('KKT_TOL'),
                         max_iter=toolkit_setting('KKT_MAX_ITER'),
                         psd_tol=toolkit_setting('PSD_TOL'), method=kkt_method)
    feasible = replace(solution, lam_star=project_feasible(qp, solution.lam_star))
    lam = lambda_tabular(feasible, saa.index_map, mdp.n_states, mdp.n_actions, m=ensemble.m)
    return solution, lam, qp


def solve_mixture_qp(mdp, ensemble, alpha, method, seed):
    """Fresh batches under every anchor with positive alpha, then solve_from_batches"""
    batches = {j: gen_batch(mdp, ensemble.base(j), method['n_transitions'], method['horizon'],
                            seed=seed + 10 + j, src=j)
               for j in range(1, ensemble.m + 1) if alpha[j - 1] > 0}
    return solve_from_batches(mdp, ensemble, batches, alpha, method['advantage'],
                              lr=method['lr'], epochs=method['epochs'])


def _qp_trial(config, seed, mdp):
    ens_cfg = config['ensemble']
    ensemble = gen_random_ensemble(seed + 1, mdp.n_states, mdp.n_actions, ens_cfg['m'],
                                   support_floor=ens_cfg['support_floor'])
    alpha = np.array(ens_cfg['alpha']) if ens_cfg.get('alpha') else np.eye(ensemble.m)[-1]
    solution, lam, qp = solve_mixture_qp(mdp, ensemble, alpha, config['method'], seed)
    curvature = qp.min_curvature() if qp.n else 0.0
    improvement = (expected_return(mdp, compose(ensemble, lam))
                   - expected_return(mdp, ensemble.anchor()))
    values = {
        'qp_objective': solution.objective,
        'kkt_residual': solution.kkt_residual,
        'fallback': float(solution.method == PG_METHOD),
        'min_curvature': curvature if np.isfinite(curvature) else 0.0,
        'true_improvement': improvement,
    }
    return [MetricsRow(config['id'], seed, name, 0, float(value))
            for name, value in values.items()]


def _critic_trial(config, seed, mdp):
    method = config['method']
    behavior = gen_random_policy(seed + 1, mdp.n_states, mdp.n_actions)
    rows = []
    for k, mu in enumerate(method['mu_grid']):
        fixed = hybrid_fixed_point(mdp, HybridCriticConfig(mu_mix=mu, behavior=behavior))
        rows.append(MetricsRow(config['id'], seed, 'hybrid_value', k,
                               float(mdp.initial_dist @ fixed.v)))
    batch = gen_batch(mdp, behavior, method['n_transitions'], method['horizon'], seed=seed + 3)
    visited = tuple(zip(*{(item.s, item.a) for item in batch}))
    sarsa = sarsa_batch(batch, behavior, mdp.gamma, lr=method['lr'], epochs=method['epochs'])
    q_star, _ = value_iteration(mdp, tol=1e-10)
    learned = q_learning_batch(batch, mdp.gamma, lr=method['lr'], epochs=method['epochs'],
                               tau=method['tau'], batch_size=method['batch_size'], seed=seed + 4,
                               n_states=mdp.n_states, n_actions=mdp.n_actions)
    rows.append(MetricsRow(config['id'], seed, 'sarsa_error', 0,
                           float(np.abs(sarsa - policy_q(mdp, behavior))[visited].max())))
    rows.append(MetricsRow(config['id'], seed, 'q_learning_error', 0,
                           float(np.abs(learned - q_star)[visited].max())))
    return rows


def _expert_trial(config, seed, mdp):
    """
    Fit the primitive on a balanced corpus, then REINFORCE from its prior
    with the label passed through compose_reward as the reward.
    """
    spec = config['expert']
    decoder = ToyDecoder(spec['decoder'])
    label = spec['label']

    def reward(y):
        return compose_reward(label(y), spec['history'], spec['lambda1'], spec['lambda2'],
                              spec['reward_gamma'])

    contexts = range(spec['contexts'])
    corpus = [(c, y) for c in contexts for y in range(decoder.outputs)]
    _, prior, trace = fit_primitive(
        PosteriorModel.standard(spec['contexts'], decoder.outputs, decoder.d),
        GaussianLatent.standard(spec['contexts'], decoder.d), decoder, corpus,
        spec['beta_kl'], spec['primitive_lr'], spec['primitive_steps'], seed=seed)
    rows = [MetricsRow(config['id'], seed, 'primitive_loss', k, loss)
            for k, loss in enumerate(trace, start=1)]

    def expected_reward(g):
        return float(np.mean([expected_label(g, decoder, c, reward) for c in contexts]))

    g = prior
    rows.append(MetricsRow(config['id'], seed, 'expected_reward', 0, expected_reward(g)))
    for step in range(1, spec['steps'] + 1):
        g, mean_reward = reinforce_step(g, decoder, contexts, reward, spec['n_samples'],
                                        spec['lr'], seed=seed * 100_003 + step)
        rows.append(MetricsRow(config['id'], seed, 'sampled_reward', step, mean_reward))
    rows.append(MetricsRow(config['id'], seed, 'expected_reward', spec['steps'],
                           expected_reward(g)))
    return rows


def _train_loop_trial(config, seed, mdp):
    method = config['method']
    behavior = gen_random_policy(seed + 1, mdp.n_states, mdp.n_actions)
    batch = gen_batch(mdp, behavior, method['n_transitions'], method['horizon'], seed=seed + 3)
    loop = TrainLoopConfig(
        batch, behavior, iterations=method['steps'], mdp=mdp, mu_mix=method['mu_mix'],
        minibatch_size=method['batch_size'], seed=seed + 4, lr=method['lr'], tau=method['tau'],
        eta=method['eta'], kkt_tol=toolkit_setting('KKT_TOL'),
        kkt_max_iter=toolkit_setting('KKT_MAX_ITER'), psd_tol=toolkit_setting('PSD_TOL'))
    report = train_loop(loop)
    baseline = expected_return(mdp, behavior)
    rows = [MetricsRow(config['id'], seed, 'behavior_return', 0, baseline)]
    for point in report.metrics:
        for name in ('return_estimate', 'qp_objective', 'kkt_residual', 'td_error'):
            rows.append(MetricsRow(config['id'], seed, name, point['iteration'],
                                   float(point[name])))
    rows.append(MetricsRow(config['id'], seed, 'improvement', len(report.metrics),
                           expected_return(mdp, report.policy) - baseline))
    return rows


def manager_experts(config, seed, mdp):
    if config['env']['generator'] == 'mood_chain':
        experts = mood_chain_experts(mdp)
    else:
        ens_cfg = config['ensemble']
        experts = list(gen_random_ensemble(seed + 1, mdp.n_states, mdp.n_actions, ens_cfg['m'],
                                           support_floor=0.0).bases)
    count = config['method'].get('n_experts')
    return experts[:count] if count else experts


def train_manager(method, mdp, experts, seed, params, base_batch=None, manager_batch=None,
                  log_every=None):
    """
    Train one manager and record (iter, return_estimate, bellman_residual,
    cql_gap) every `log_every` iterations and at the end.
    Returns (q, curve).
    """
    horizon = params['horizon']
    eval_batch = manager_batch
    if eval_batch is None:
        eval_batch = collect_manager_batch(MoeEnv(mdp, experts, seed=seed, horizon=horizon),
                                           params['n_transitions'], seed=seed)
    curve = []

    def record(iteration, q):
        curve.append({
            'iter': iteration,
            'return_estimate': manager_value(mdp, experts, greedy_selector(q),
                                             cap=toolkit_setting('ORACLE_STATE_CAP')),
            'bellman_residual': batch_bellman_residual(q, eval_batch, mdp.gamma),
            'cql_gap': cql_gap(q, eval_batch),
        })

    def callback(iteration, q):
        if log_every and iteration % log_every == 0:
            record(iteration, q)

    if method == 'dqn':
        env = MoeEnv(mdp, experts, seed=seed + 2, horizon=horizon)
        total = params['episodes']
        q = dqn_manager(env, total, gamma=mdp.gamma, lr=params['lr'], tau=params['tau'],
                        seed=seed + 3, callback=callback)
    elif method == 'cql':
        total = params['steps']
        q = cql_manager(eval_batch, params['alpha'], gamma=mdp.gamma, lr=params['lr'],
                        tau=params['tau'], steps=total, batch_size=params['batch_size'],
                        seed=seed + 3, n_actions=mdp.n_actions, callback=callback)
    else:
        if base_batch is None:
            behavior = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
            base_batch = gen_batch(mdp, behavior, params['n_transitions'], horizon, seed=seed + 3)
        total = params['sweeps']
        q = mbrl_manager(base_batch, experts, params['rollout_budget'], gamma=mdp.gamma,
                         seed=seed + 4, horizon=horizon, sweeps=total, callback=callback)
    if not curve or curve[-1]['iter'] != total:
        record(total, q)
    return q, curve


def _manager_trial(config, seed, mdp):
    experts = manager_experts(config, seed, mdp)
    oracle = oracle_manager(mdp, experts, cap=toolkit_setting('ORACLE_STATE_CAP'))
    _, curve = train_manager(config['method']['name'], mdp, experts, seed, config['method'])
    rows = [MetricsRow(config['id'], seed, 'oracle_value', 0, oracle.value)]
    for point in curve:
        for name in ('return_estimate', 'bellman_residual', 'cql_gap'):
            rows.append(MetricsRow(config['id'], seed, name, point['iter'], float(point[name])))
    ratio = curve[-1]['return_estimate'] / oracle.value if oracle.value else 1.0
    rows.append(MetricsRow(config['id'], seed, 'oracle_ratio', curve[-1]['iter'], ratio))
    return rows


TRIALS = {
    'bounds': _bounds_trial,
    'qp': _qp_trial,
    'critic': _critic_trial,
    'manager': _manager_trial,
    'expert': _expert_trial,
    'train_loop': _train_loop_trial,
}


def summarize(config, rows):
    finals = {}
    for row in rows:
        finals.setdefault(row.metric, {})[row.trial] = row.value
    return {
        'experiment': config['id'],
        'kind': config['kind'],
        'trials': list(config['trials']),
        'rows': len(rows),
        'final': {metric: float(np.mean(list(values.values())))
                  for metric, values in sorted(finals.items())},
    }


def run_experiment(config, out_dir):
    """Run every trial of a validated config and write `<id>_metrics.csv` and `<id>_summary.json`"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trial = TRIALS[config['kind']]
    rows = []
    for seed in config['trials']:
        mdp = build_env(config['env'], seed) if 'env' in config else None
        rows.extend(trial(config, seed, mdp))
        logger.debug('experiment %s trial %d done', config['id'], seed)

    metrics_path = out_dir / f"{config['id']}_metrics.csv"
    summary_path = out_dir / f"{config['id']}_summary.json"
    with open(metrics_path, 'w', newline='') as stream:
        write_metrics(rows, stream)
    summary = summarize(config, rows)
    with open(summary_path, 'w') as stream:
        stream.write(json.dumps(summary, indent=2, sort_keys=True) + '\n')
    logger.info('experiment %s wrote %d metric rows to %s', config['id'], len(rows), metrics_path)
    return ExperimentResult(metrics_path=metrics_path, summary_path=summary_path, summary=summary)
