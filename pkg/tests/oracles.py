"""Independent reference computations used to check the solvers.

None of these import the package's solvers. They are slow, brute-force or
built on third-party numerics on purpose.
"""

from __future__ import annotations

import math

import numpy as np


def normal_cdf(x: float) -> float:
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Bisection on the erfc-based CDF; slow but exact to ~1e-15."""
    if p > 0.5:
        # 1 - p is exact here, and the lower tail keeps full precision
        return -normal_quantile(1.0 - p)
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def wilson_hilferty(m: int, alpha: float) -> float:
    z = normal_quantile(alpha)
    h = 2.0 / (9.0 * m)
    return m * max(1.0 - h + z * math.sqrt(h), 0.0) ** 3


def chi2_dual_grid(losses, rho: float, step: float = 1e-5) -> float:
    """Minimum of eta + sqrt((1+2 rho)/n sum (l - eta)_+^2) over an eta grid.

    The grid spans [min(l) - width, max(l)], with ``width`` large enough to
    contain the all-active minimizer.
    """
    x = np.asarray(losses, dtype=float)
    n = x.size
    c = (1.0 + 2.0 * rho) / n
    width = (x.max() - x.min()) * (1.0 + 1.0 / math.sqrt(2.0 * rho)) + 1e-3
    etas = np.arange(x.min() - width, x.max() + step, step)
    best = math.inf
    for chunk in np.array_split(etas, max(1, etas.size // 200_000)):
        h = np.maximum(x[None, :] - chunk[:, None], 0.0)
        vals = chunk + np.sqrt(c * np.sum(h * h, axis=1))
        best = min(best, float(vals.min()))
    return best


def chi2_primal_cvx(losses, rho: float) -> float:
    """max w.l over the simplex with (1/n) sum 0.5 (n w - 1)^2 <= rho, via cvxpy."""
    import cvxpy as cp

    x = np.asarray(losses, dtype=float)
    n = x.size
    w = cp.Variable(n)
    cons = [w >= 0, cp.sum(w) == 1, cp.sum_squares(n * w - 1) <= 2 * n * rho]
    prob = cp.Problem(cp.Maximize(x @ w), cons)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def mixture_grid_k2(a, p, rho: float, step: float = 1e-4) -> float:
    a = np.asarray(a, float)
    p = np.asarray(p, float)
    s = np.arange(0.0, 1.0 + step / 2, step)
    q = np.stack([s, 1.0 - s], axis=1)
    div = np.sum((q - p) ** 2 / p, axis=1)
    vals = q @ a
    ok = div <= rho
    best = float(vals[ok].max()) if ok.any() else -math.inf
    # the grid can miss the boundary; add the two exact boundary points
    r = math.sqrt(rho / (1.0 / p[0] + 1.0 / p[1]))
    for q0 in (p[0] - r, p[0] + r):
        if 0.0 <= q0 <= 1.0:
            best = max(best, q0 * a[0] + (1.0 - q0) * a[1])
    return best


def mixture_grid_k3(a, p, rho: float, step: float = 1e-4) -> float:
    """Grid over q1; for each q1 the best q2 sits at an endpoint of its
    feasible interval (the objective is linear in q2), found by the quadratic
    formula."""
    a = np.asarray(a, float)
    p = np.asarray(p, float)
    best = -math.inf
    for q1 in np.arange(0.0, 1.0 + step / 2, step):
        rest = 1.0 - q1
        # (q1-p1)^2/p1 + (q2-p2)^2/p2 + (rest-q2-p3)^2/p3 <= rho
        A = 1.0 / p[1] + 1.0 / p[2]
        B = -2.0 - 2.0 * (rest - p[2]) / p[2]
        C = (q1 - p[0]) ** 2 / p[0] + p[1] + (rest - p[2]) ** 2 / p[2] - rho
        disc = B * B - 4 * A * C
        if disc < 0:
            continue
        r1 = (-B - math.sqrt(disc)) / (2 * A)
        r2 = (-B + math.sqrt(disc)) / (2 * A)
        lo, hi = max(r1, 0.0), min(r2, rest)
        if lo > hi:
            continue
        for q2 in (lo, hi):
            best = max(best, q1 * a[0] + q2 * a[1] + (rest - q2) * a[2])
    return best


def finite_difference(f, theta, h: float = 1e-6) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return g
