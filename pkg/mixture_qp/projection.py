"""
Euclidean projections onto the per-state feasible set of mixture weights.

A state block holds lam(a, i) for the candidate actions a and the m - 1
non-anchor channels i. Its feasible set is lam >= 0, sum_i lam(a, i) <= 1
for every a, and sum_{a,i} w(a, i) lam(a, i) = 0 with w = mu_i - mu_m.
"""
import numpy as np


def capped_simplex(y):
    """Row-wise projection onto {x >= 0, sum(x) <= 1}"""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.maximum(y, 0.0)
    over = x.sum(axis=1) > 1.0
    if np.any(over):
        rows = y[over]
        u = -np.sort(-rows, axis=1)
        cumulative = np.cumsum(u, axis=1) - 1.0
        ind = np.arange(1, rows.shape[1] + 1)
        # at least one entry is kept even when huge inputs cancel
        support = np.maximum((u - cumulative / ind > 0).sum(axis=1), 1)
        theta = cumulative[np.arange(len(rows)), support - 1] / support
        x[over] = np.maximum(rows - theta[:, None], 0.0)
    return x


def project_block(y, w, tol=1e-14, max_iter=200):
    """
    Exact projection of one state block by bisection on the hyperplane
    multiplier theta; x(theta) = capped_simplex(y - theta w) and w.x(theta)
    is non-increasing in theta.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    nonzero = np.abs(w[w != 0])
    if nonzero.size == 0:
        return capped_simplex(y)

    def slope(theta):
        x = capped_simplex(y - theta * w)
        return x, float(np.sum(w * x))

    x, value = slope(0.0)
    if abs(value) <= tol:
        return x
    # grow the bracket from the scale of the largest weight until the sign flips
    sign = 1.0 if value > 0 else -1.0
    inner, outer = 0.0, (np.abs(y).max() + 2.0) / nonzero.max()
    for _ in range(max_iter):
        x, value = slope(sign * outer)
        if sign * value <= tol or not np.isfinite(outer * 2.0):
            break
        inner, outer = outer, outer * 2.0
    if abs(value) <= tol:
        return x
    lo, hi = sorted((sign * inner, sign * outer))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        x, value = slope(mid)
        if abs(value) <= tol:
            break
        if value > 0:
            lo = mid
        else:
            hi = mid
    return x


def project_exact(lam_tilde, rho, beta, tol=1e-14):
    """Exact projection onto [0, 1]^A intersected with (rho - beta).lam = 0"""
    lam_tilde = np.asarray(lam_tilde, dtype=float)
    w = np.asarray(rho, dtype=float) - np.asarray(beta, dtype=float)
    return project_block(lam_tilde[:, None], w[:, None], tol=tol)[:, 0]


def project_closed_form(lam_tilde, rho, beta, clip=True):
    """
    Closed-form projection layer: shift along rho - beta onto the
    hyperplane, then clip to [0, 1]. Identity when rho == beta.
    """
    lam_tilde = np.asarray(lam_tilde, dtype=float)
    w = np.asarray(rho, dtype=float) - np.asarray(beta, dtype=float)
    norm = float(w @ w)
    if norm == 0.0:
        return lam_tilde.copy()
    shifted = lam_tilde + w * (-(w @ lam_tilde) / norm)
    return np.clip(shifted, 0.0, 1.0) if clip else shifted
