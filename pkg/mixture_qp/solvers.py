"""
Solvers for the mixture-weight quadratic program.

Stationarity of the Lagrangian reads
    Q x - M'nu + N'kappa - eta = c,   kappa >= 0, eta >= 0,
with eta the multiplier of x >= 0, so the optimum has the form
x = max(0, Q^-1 (c + M'nu - N' max(0, kappa))) on the free variables.
"""
import logging
from dataclasses import dataclass

import numpy as np

from mdp_core.exceptions import ConstraintViolation

from .projection import capped_simplex, project_block

logger = logging.getLogger(__name__)

KKT_METHOD = 'kkt-closed-form'
PG_METHOD = 'projected-gradient'

FIXED_POINT = 'fixed-point'
ACTIVE_SET = 'active-set'
DAMPING = 0.5


@dataclass(frozen=True)
class KktSolution:
    lam_star: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    kkt_residual: float
    iterations: int
    method: str
    objective: float
    path: str = ''


def stationarity_slack(qp, x, nu, kappa):
    """eta = Qx - c - M'nu + N'kappa"""
    return qp.quad @ x - qp.lin - qp.eq_matrix.T @ nu + qp.ineq_matrix.T @ kappa


def kkt_residual(qp, x, nu, kappa):
    """Largest violation of feasibility, dual feasibility and complementarity"""
    eta = stationarity_slack(qp, x, nu, kappa)
    slack = qp.ineq_matrix @ x - 1.0
    parts = [
        np.abs(qp.eq_matrix @ x),
        np.maximum(slack, 0.0),
        np.maximum(-x, 0.0),
        np.maximum(x - 1.0, 0.0),
        np.maximum(-kappa, 0.0),
        np.maximum(-eta, 0.0),
        np.abs(kappa * slack),
        np.abs(eta * x),
    ]
    return float(max((part.max(initial=0.0) for part in parts), default=0.0))


def _solve_active(qp, free, tight):
    """Joint solve for (x_F, nu, kappa_K) with x_Z = 0 and tight rows at 1"""
    n_free = int(free.sum())
    eq_free = qp.eq_matrix[:, free]
    ineq_free = qp.ineq_matrix[tight][:, free]
    n_eq, n_tight = len(eq_free), len(ineq_free)
    size = n_free + n_eq + n_tight
    system = np.zeros((size, size))
    system[:n_free, :n_free] = qp.quad[np.ix_(free, free)]
    system[:n_free, n_free:n_free + n_eq] = -eq_free.T
    system[:n_free, n_free + n_eq:] = ineq_free.T
    system[n_free:n_free + n_eq, :n_free] = eq_free
    system[n_free + n_eq:, :n_free] = ineq_free
    rhs = np.concatenate([qp.lin[free], np.zeros(n_eq), np.ones(n_tight)])
    solution = np.linalg.lstsq(system, rhs, rcond=None)[0]

    x = np.zeros(qp.n)
    x[free] = solution[:n_free]
    nu = solution[n_free:n_free + n_eq]
    kappa = np.zeros(len(qp.ineq_matrix))
    kappa[tight] = solution[n_free + n_eq:]
    return x, nu, kappa


def _working_primal(qp, free, nu, kappa, psd_tol):
    """max(0, Q_FF^-1 r_F) on the free set, zero elsewhere; None when Q_FF is singular"""
    x = np.zeros(qp.n)
    if not free.any():
        return x
    sub = qp.quad[np.ix_(free, free)]
    eigenvalues = np.abs(np.linalg.eigvalsh(sub))
    if eigenvalues.min() <= psd_tol * max(1.0, eigenvalues.max()):
        return None
    r = qp.lin + qp.eq_matrix.T @ nu - qp.ineq_matrix.T @ kappa
    x[free] = np.maximum(np.linalg.solve(sub, r[free]), 0.0)
    return x


def _target_multipliers(qp, free, tight):
    """
    (nu, kappa) making M x = 0 and the tight simplex rows equal 1 on the
    free set; rows that would need a negative kappa are released.
    """
    tight = tight.copy()
    eq_free = qp.eq_matrix[:, free]
    inverse = np.linalg.inv(qp.quad[np.ix_(free, free)]) if free.any() else np.zeros((0, 0))
    while True:
        ineq_free = qp.ineq_matrix[tight][:, free]
        rows = np.vstack([eq_free, ineq_free])
        kappa = np.zeros(len(qp.ineq_matrix))
        if rows.size == 0:
            return np.zeros(len(qp.eq_matrix)), kappa
        coupling = rows @ inverse @ np.hstack([eq_free.T, -ineq_free.T])
        rhs = np.concatenate([np.zeros(len(eq_free)), np.ones(len(ineq_free))])
        rhs -= rows @ inverse @ qp.lin[free]
        solution = np.linalg.lstsq(coupling, rhs, rcond=None)[0]
        released = solution[len(eq_free):] < 0.0
        if not released.any():
            kappa[tight] = solution[len(eq_free):]
            return solution[:len(eq_free)], kappa
        tight[np.flatnonzero(tight)[released]] = False


def _fixed_point(qp, tol, max_iter, psd_tol, active_tol):
    """
    Damped fixed point on (nu, kappa) starting at zero. Each step moves the
    multipliers halfway to the values that satisfy the equality rows and the
    tight simplex rows on the current free set; stops once x changes by at
    most tol. Returns None when Q is singular on the free set or the
    iteration does not settle.
    """
    nu, kappa = np.zeros(len(qp.eq_matrix)), np.zeros(len(qp.ineq_matrix))
    free = np.ones(qp.n, dtype=bool)
    x = _working_primal(qp, free, nu, kappa, psd_tol)
    for iteration in range(1, max_iter + 1):
        if x is None:
            return None
        eta = stationarity_slack(qp, x, nu, kappa)
        free = (x > active_tol) | (eta < -active_tol)
        tight = (qp.ineq_matrix @ x >= 1.0 - active_tol) | (kappa > active_tol)
        if _working_primal(qp, free, nu, kappa, psd_tol) is None:
            return None
        nu_hat, kappa_hat = _target_multipliers(qp, free, tight)
        nu = (1.0 - DAMPING) * nu + DAMPING * nu_hat
        kappa = (1.0 - DAMPING) * kappa + DAMPING * kappa_hat
        previous, x = x, _working_primal(qp, free, nu, kappa, psd_tol)
        if x is not None and np.abs(x - previous).max(initial=0.0) <= tol:
            x = _working_primal(qp, free, nu_hat, kappa_hat, psd_tol)
            return x, nu_hat, kappa_hat, iteration
    return None


def _active_set(qp, max_iter, active_tol):
    """
    Primal-dual active set: fix the zero-bounded variables and the tight
    simplex rows, solve stationarity and the equalities jointly, then update
    the sets from the signs of x, eta, kappa and the simplex slack. Returns
    None when the sets cycle or do not settle.
    """
    zero = np.zeros(qp.n, dtype=bool)
    tight = np.zeros(len(qp.ineq_matrix), dtype=bool)
    seen = set()
    for iteration in range(1, max_iter + 1):
        x, nu, kappa = _solve_active(qp, ~zero, tight)
        eta = stationarity_slack(qp, x, nu, kappa)
        slack = qp.ineq_matrix @ x - 1.0
        next_zero = np.where(zero, eta >= -active_tol, x < -active_tol)
        next_tight = np.where(tight, kappa > -active_tol, slack > active_tol)
        if np.array_equal(next_zero, zero) and np.array_equal(next_tight, tight):
            return np.maximum(x, 0.0), nu, np.maximum(kappa, 0.0), iteration
        key = (next_zero.tobytes(), next_tight.tobytes())
        if key in seen:
            logger.debug('active set cycled after %d iterations', iteration)
            return None
        seen.add(key)
        zero, tight = next_zero, next_tight
    logger.debug('active set did not settle in %d iterations', max_iter)
    return None


def solve_kkt(qp, tol=1e-8, max_iter=1000, psd_tol=1e-9, active_tol=1e-12,
              method=FIXED_POINT):
    """
    Closed-form KKT solve of the mixture QP.

    The fixed-point path needs Q invertible on the free variables; the
    active-set path solves the block KKT system and copes with singular Q.
    `method` picks the first path tried; the fixed point hands over to the
    active set when it cannot be used. Falls back to projected gradient
    when Q is not PSD on ker(M) or no path meets tol on the KKT residual.
    """
    if method not in (FIXED_POINT, ACTIVE_SET):
        raise ConstraintViolation(f'unknown KKT method {method!r}', worst=method)
    if qp.n == 0:
        return KktSolution(np.zeros(0), np.zeros(len(qp.eq_matrix)), np.zeros(0), 0.0, 0,
                           KKT_METHOD, qp.const, path=method)
    curvature = qp.min_curvature()
    if curvature < -psd_tol:
        logger.warning('QP is not concave on the feasible subspace (min curvature %.3e); '
                       'falling back to projected gradient', curvature)
        return solve_pg(qp, tol=min(tol, 1e-10))

    paths = [FIXED_POINT, ACTIVE_SET] if method == FIXED_POINT else [ACTIVE_SET]
    for path in paths:
        if path == FIXED_POINT:
            result = _fixed_point(qp, tol, max_iter, psd_tol, active_tol)
        else:
            result = _active_set(qp, max_iter, active_tol)
        if result is None:
            logger.debug('%s path unavailable for %r', path, qp)
            continue
        x, nu, kappa, iterations = result
        residual = kkt_residual(qp, x, nu, kappa)
        if residual <= tol:
            logger.debug('%s KKT solve settled in %d iterations (residual %.3e)',
                         path, iterations, residual)
            return KktSolution(lam_star=x, nu=nu, kappa=kappa, kkt_residual=residual,
                               iterations=iterations, method=KKT_METHOD,
                               objective=qp.objective(x), path=path)
        logger.debug('%s KKT residual %.3e above tolerance %.1e', path, residual, tol)

    logger.warning('no closed-form KKT point within tolerance %.1e; '
                   'falling back to projected gradient', tol)
    return solve_pg(qp, tol=min(tol, 1e-10))


def project_feasible(qp, x):
    """Exact Euclidean projection onto the QP feasible set, block by block"""
    out = np.empty_like(x)
    for row, groups in qp.blocks:
        members = np.stack(groups)
        if row is None:
            out[members] = capped_simplex(x[members])
        else:
            out[members] = project_block(x[members], qp.eq_matrix[row, members])
    return out


def _estimate_multipliers(qp, x, active_tol=1e-9):
    """Least-squares multipliers for a primal point from its active sets"""
    free = x > active_tol
    tight = qp.ineq_matrix @ x >= 1.0 - active_tol
    eq_free = qp.eq_matrix[:, free]
    ineq_free = qp.ineq_matrix[tight][:, free]
    system = np.hstack([-eq_free.T, ineq_free.T])
    rhs = qp.lin[free] - qp.quad[free] @ x
    if system.size == 0:
        return np.zeros(len(qp.eq_matrix)), np.zeros(len(qp.ineq_matrix))
    solution = np.linalg.lstsq(system, rhs, rcond=None)[0]
    nu = solution[:len(eq_free)]
    kappa = np.zeros(len(qp.ineq_matrix))
    kappa[tight] = np.maximum(solution[len(eq_free):], 0.0)
    return nu, kappa


def solve_pg(qp, step=None, tol=1e-10, max_iter=20000, restarts=0, seed=0):
    """
    Projected gradient ascent with step 1/||Q||_2, from zero and from
    `restarts` seeded random feasible points; keeps the best objective.
    """
    if step is None:
        norm = float(np.abs(np.linalg.eigvalsh(qp.quad)).max(initial=0.0)) if qp.n else 0.0
        step = 1.0 / norm if norm > 0 else 1.0
    rng = np.random.default_rng(seed)
    starts = [np.zeros(qp.n)] + [project_feasible(qp, rng.random(qp.n)) for _ in range(restarts)]

    best, best_value, total = None, -np.inf, 0
    for x in starts:
        for _ in range(max_iter):
            total += 1
            candidate = project_feasible(qp, x + step * qp.gradient(x))
            change = np.abs(candidate - x).max(initial=0.0)
            x = candidate
            if change <= tol:
                break
        value = qp.objective(x)
        if value > best_value:
            best, best_value = x, value

    nu, kappa = _estimate_multipliers(qp, best)
    residual = kkt_residual(qp, best, nu, kappa)
    logger.debug('projected gradient finished after %d steps (objective %.6g)', total, best_value)
    return KktSolution(lam_star=best, nu=nu, kappa=kappa, kkt_residual=residual,
                       iterations=total, method=PG_METHOD, objective=best_value, path=PG_METHOD)
