"""Tractable inner maximizers for the robust objectives.

Four ambiguity models are covered:

* ``chi2``: sample-level chi-square ball around the empirical distribution,
  solved through its one-dimensional dual in the shift ``eta``.
* ``kl``: exponential tilting of the per-sample losses at temperature ``tau``.
* ``wasserstein``: the gradient-norm penalty that stands in for a 2-Wasserstein
  ball.
* ``mixture_chi2``: group-level chi-square ball around a reference mixture,
  solved exactly through its KKT conditions.

Two chi-square conventions coexist here. The sample-level ball uses
``D(w) = (1/n) sum_i 0.5 (n w_i - 1)^2 <= rho`` (generator ``0.5 (t-1)^2``);
the mixture ball uses ``sum_k (q_k - p_k)^2 / p_k <= rho``. For uniform
``p`` the two coincide once the mixture radius is doubled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import clip_renormalize, project_simplex

KL_TAU_FLOOR = 1e-6
MIXTURE_VAR_FLOOR = 1e-12
_EXP_GUARD = 700.0


@dataclass(frozen=True)
class AmbiguitySpec:
    kind: str
    param: float

    def __post_init__(self):
        k, v = self.kind, self.param
        if k == "chi2" and not v > 0:
            raise ValueError("chi2 radius must be positive")
        if k == "kl" and not v > 0:
            raise ValueError("kl temperature must be positive")
        if k in ("wasserstein", "mixture_chi2") and not v >= 0:
            raise ValueError(f"{k} parameter must be nonnegative")
        if k not in ("chi2", "kl", "wasserstein", "mixture_chi2"):
            raise ValueError(f"unknown ambiguity kind {k!r}")

    @classmethod
    def chi2(cls, rho: float) -> "AmbiguitySpec":
        return cls("chi2", float(rho))

    @classmethod
    def kl(cls, tau: float) -> "AmbiguitySpec":
        return cls("kl", float(tau))

    @classmethod
    def wasserstein(cls, rho0: float) -> "AmbiguitySpec":
        return cls("wasserstein", float(rho0))

    @classmethod
    def mixture_chi2(cls, rho: float) -> "AmbiguitySpec":
        return cls("mixture_chi2", float(rho))


@dataclass
class InnerSolution:
    weights: np.ndarray
    value: float
    dual: dict = field(default_factory=dict)


def _losses(losses) -> np.ndarray:
    x = np.asarray(losses, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("losses must be nonempty")
    if not np.all(np.isfinite(x)):
        raise ValueError("losses must be finite")
    return x


# ---------------------------------------------------------------------------
# sample-level chi-square


def chi2_dual_objective(eta: float, losses, rho: float) -> float:
    """f(eta) = eta + sqrt((1 + 2 rho)/n * sum (l_i - eta)_+^2)."""
    x = np.asarray(losses, dtype=float)
    h = np.maximum(x - eta, 0.0)
    return float(eta + math.sqrt((1.0 + 2.0 * rho) / x.size * np.dot(h, h)))


def _chi2_dual_slope(eta: float, x: np.ndarray, c: float) -> float:
    h = x[x > eta] - eta
    if h.size == 0:
        return 1.0
    return 1.0 - c * h.sum() / math.sqrt(np.dot(h, h))


def chi2_dual_solve(losses, rho: float, tol: float = 1e-10) -> InnerSolution:
    """Worst case over the sample-level chi-square ball of radius ``rho``.

    Minimizes the convex dual f(eta) by bisection on its monotone
    subgradient. The minimizer never exceeds max(l): f has slope 1 there.
    Below ``l_bar - sqrt(var / (2 rho))`` every sample is active and the
    slope is ``1 - sqrt(1+2 rho) (l_bar - eta) / sqrt((l_bar - eta)^2 + var)``,
    which is negative, so that point (clipped to min(l)) minus a margin is a
    valid lower bracket.
    """
    if not rho > 0:
        raise ValueError("chi2 radius must be positive")
    x = _losses(losses)
    n = x.size
    lmax, lmin = float(x.max()), float(x.min())
    c = math.sqrt((1.0 + 2.0 * rho) / n)

    # ties at the maximum decide whether the vertex face is already inside the ball
    m_top = int(np.count_nonzero(x == lmax))
    if lmax == lmin or (1.0 + 2.0 * rho) * m_top >= n:
        w = np.where(x == lmax, 1.0 / m_top, 0.0)
        return InnerSolution(w, lmax, {"eta": lmax, "lambda": 0.0, "degenerate": True})

    mean = float(x.mean())
    sd = float(x.std())
    lo = min(lmin, mean - sd / math.sqrt(2.0 * rho)) - (lmax - lmin) - 1.0
    hi = lmax
    eps = tol * (1.0 + abs(lmax))
    while hi - lo > eps:
        mid = 0.5 * (lo + hi)
        if _chi2_dual_slope(mid, x, c) > 0:
            hi = mid
        else:
            lo = mid
    eta = 0.5 * (lo + hi)
    # on a fixed active set J (size m, centred sum of squares Q) stationarity
    # gives eta = mean_J - sqrt(Q / (m ((1 + 2 rho) m / n - 1)))
    active = x > eta
    m = int(active.sum())
    xa = x[active]
    q = float(((xa - xa.mean()) ** 2).sum())
    denom = m * ((1.0 + 2.0 * rho) * m / n - 1.0)
    if denom > 0:
        cand = float(xa.mean()) - math.sqrt(q / denom)
        if np.array_equal(x > cand, active):
            eta = cand
    h = np.maximum(x - eta, 0.0)
    s1 = h.sum()
    w = h / s1
    value = chi2_dual_objective(eta, x, rho)
    return InnerSolution(w, value, {"eta": eta, "lambda": s1 / n, "degenerate": False})


def chi2_sample_divergence(w) -> float:
    """(1/n) sum_i 0.5 (n w_i - 1)^2 for weights over n samples."""
    w = np.asarray(w, dtype=float)
    n = w.size
    return float(0.5 * np.mean((n * w - 1.0) ** 2))


# ---------------------------------------------------------------------------
# KL tilting


def kl_tilt_weights(losses, tau: float) -> InnerSolution:
    """Exponentially tilted weights w_i ~ exp((l_i - mean l) / tau).

    ``dual["potential"]`` is tau * log mean exp(l / tau): the smooth objective
    whose gradient is exactly sum_i w_i grad l_i.
    """
    x = _losses(losses)
    t = max(float(tau), KL_TAU_FLOOR)
    z = (x - x.mean()) / t
    shift = 0.0
    if z.max() - z.min() > _EXP_GUARD or z.max() > _EXP_GUARD:
        shift = float(z.max())
    e = np.exp(z - shift)
    s = e.sum()
    w = e / s
    log_norm = math.log(s / x.size) + shift
    potential = float(x.mean() + t * log_norm)
    return InnerSolution(w, float(np.dot(w, x)),
                         {"tau": t, "log_normalizer": log_norm, "potential": potential})


# ---------------------------------------------------------------------------
# Wasserstein gradient penalty


def wasserstein_penalty(grad_sqnorms, rho0: float) -> float:
    """rho0 * sqrt(mean_i ||grad_z l_i||^2)."""
    g = np.asarray(grad_sqnorms, dtype=float).ravel()
    if rho0 < 0:
        raise ValueError("penalty weight must be nonnegative")
    if g.size == 0:
        raise ValueError("need at least one gradient norm")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("squared gradient norms must be finite and nonnegative")
    return float(rho0 * math.sqrt(g.mean()))


# ---------------------------------------------------------------------------
# group-level chi-square mixture


def chi2_divergence(q, p) -> float:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError("q and p must have equal length")
    if np.any(p <= 0):
        raise ValueError("reference distribution must be strictly positive")
    return float(np.sum((q - p) ** 2 / p))


def chi2_ball_contains(q, p, eps: float) -> bool:
    return chi2_divergence(q, p) <= eps + 1e-12


def _kkt_weights(a, p, lam):
    """q(lambda) = p [1 + (a - tau)/(2 lambda)]_+ with tau solving sum q = 1."""
    b = a + 2.0 * lam
    order = np.argsort(-b, kind="stable")
    bs, ps = b[order], p[order]
    cp = np.cumsum(ps)
    cpb = np.cumsum(ps * bs)
    taus = (cpb - 2.0 * lam) / cp
    # largest active set whose threshold sits below every active b
    ok = taus < bs
    j = int(np.nonzero(ok)[0][-1])
    tau = taus[j]
    q = p * np.maximum(b - tau, 0.0) / (2.0 * lam)
    active = np.zeros(a.size, dtype=bool)
    active[order[: j + 1]] = True
    return q, active


def _mixture_value(q, a):
    return float(np.dot(q, a))


def mixture_chi2_argmax(a, p_ref, rho: float, mode: str = "kkt") -> InnerSolution:
    """max_q sum_k q_k a_k over the simplex with sum (q_k - p_k)^2 / p_k <= rho.

    ``mode="kkt"`` is exact. ``mode="project"`` and ``mode="clip"`` take the
    interior step p + t p (a - mu) and map it back with the Euclidean
    projection or clip-and-renormalize; those are approximations kept for
    comparison and may leave the ball.
    """
    a = np.asarray(a, dtype=float).ravel()
    p = np.asarray(p_ref, dtype=float).ravel()
    if a.shape != p.shape:
        raise ValueError("group losses and reference must have equal length")
    if a.size < 2:
        raise ValueError("need at least two groups")
    if np.any(p <= 0):
        raise ValueError("reference distribution must be strictly positive")
    if not np.all(np.isfinite(a)):
        raise ValueError("group losses must be finite")
    if rho < 0:
        raise ValueError("radius must be nonnegative")
    p = p / p.sum()
    mu = float(np.dot(p, a))
    centered = a - mu
    var = float(np.dot(p, centered * centered))
    if rho == 0 or var < MIXTURE_VAR_FLOOR:
        return InnerSolution(p.copy(), mu, {"t": 0.0, "lambda": math.inf, "case": "floor"})

    t = math.sqrt(rho / var)
    q = p + t * p * centered
    if mode != "kkt":
        q = project_simplex(q) if mode == "project" else clip_renormalize(q)
        return InnerSolution(q, _mixture_value(q, a), {"t": t, "case": mode})
    if np.all(q >= 0):
        return InnerSolution(q, mu + math.sqrt(rho * var),
                             {"t": t, "lambda": 0.5 / t, "case": "interior"})

    # Vertex regime: all mass on the maximal groups already fits in the ball.
    top = a == a.max()
    alpha_top = p[top].sum()
    q_top = np.where(top, p / alpha_top, 0.0)
    if chi2_divergence(q_top, p) <= rho:
        return InnerSolution(q_top, float(a.max()), {"t": math.inf, "lambda": 0.0, "case": "vertex"})

    # R(lambda) is continuous and strictly decreasing; bracket then bisect
    # to pin the active set, then solve R = rho in closed form on that set.
    def R(lam):
        q_, _ = _kkt_weights(a, p, lam)
        return chi2_divergence(q_, p)

    hi = 0.5 / t
    while R(hi) > rho:
        hi *= 2.0
    lo = hi
    while R(lo) < rho:
        lo *= 0.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if R(mid) > rho:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    lam = 0.5 * (lo + hi)
    _, active = _kkt_weights(a, p, lam)
    alpha = p[active].sum()
    gamma = 1.0 - alpha
    a_bar = float(np.dot(p[active], a[active]) / alpha)
    s_j = float(np.dot(p[active], (a[active] - a_bar) ** 2))
    slack = rho - gamma * gamma / alpha - gamma
    if s_j > 0 and slack > 0:
        lam_exact = 0.5 * math.sqrt(s_j / slack)
        q_exact = np.zeros_like(p)
        q_exact[active] = p[active] * (1.0 + (a[active] - a_bar) / (2.0 * lam_exact)
                                       + gamma / alpha)
        if np.all(q_exact >= 0):
            lam, q = lam_exact, q_exact
        else:
            q, _ = _kkt_weights(a, p, lam)
    else:
        q, _ = _kkt_weights(a, p, lam)
    q = np.maximum(q, 0.0)
    q = q / q.sum()
    return InnerSolution(q, _mixture_value(q, a),
                         {"t": 1.0 / (2.0 * lam), "lambda": lam, "case": "boundary",
                          "support": int(active.sum())})
