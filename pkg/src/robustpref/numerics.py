"""Shared numerical helpers: seeded streams, simplex projection, slope fits."""

from __future__ import annotations

import numpy as np

# seed = base + SEED_REP_STRIDE * replication + SEED_N_STRIDE * n
SEED_REP_STRIDE = 17
SEED_N_STRIDE = 1


def affine_seed(base_seed: int, replication: int, n: int) -> int:
    return int(base_seed) + SEED_REP_STRIDE * int(replication) + SEED_N_STRIDE * int(n)


def make_rng(base_seed: int, replication: int = 0, n: int = 0) -> np.random.Generator:
    """Return a Philox-backed generator seeded by ``affine_seed``.

    Philox is counter-based, so identical seeds yield identical streams on
    every platform numpy supports.
    """
    seed = affine_seed(base_seed, replication, n)
    if seed < 0:
        raise ValueError(f"derived seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


def stream_seed(rng: np.random.Generator) -> int:
    """Seed a generator from ``make_rng`` was built with."""
    return int(rng.bit_generator.seed_seq.entropy)


def _as_finite_vector(v) -> np.ndarray:
    x = np.asarray(v, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("input vector is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("input vector has non-finite entries")
    return x


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    x = _as_finite_vector(v)
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, x.size + 1)
    k = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[k] / (k + 1)
    q = np.maximum(x - tau, 0.0)
    # rounding can leave the sum a few ulps off
    return q / q.sum()


def clip_renormalize(v) -> np.ndarray:
    """Clip negatives to zero and rescale to unit mass.

    Not a Euclidean projection; kept for comparing against the exact one.
    """
    x = np.maximum(_as_finite_vector(v), 0.0)
    s = x.sum()
    if s <= 0.0:
        return np.full(x.size, 1.0 / x.size)
    return x / s


def fit_loglog_slope(xs, ys) -> float:
    """OLS slope of log(ys) on log(xs)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d and of equal length")
    if x.size < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit requires positive values")
    if np.any(np.diff(x) <= 0):
        raise ValueError("xs must be strictly increasing")
    lx, ly = np.log(x), np.log(y)
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
