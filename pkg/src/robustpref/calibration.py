"""Radius calibration: Pearson statistic, Wilson-Hilferty chi-square
quantiles (Acklam inverse normal) and the radius schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Acklam's rational approximation coefficients.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _tail(q: float) -> float:
    c, d = _C, _D
    num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
    den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
    return num / den


def inverse_normal(p: float) -> float:
    """Standard normal quantile via Acklam's approximation (rel. error ~1.15e-9)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if p < _P_LOW:
        return _tail(math.sqrt(-2.0 * math.log(p)))
    if p > 1.0 - _P_LOW:
        return -_tail(math.sqrt(-2.0 * math.log1p(-p)))
    q = p - 0.5
    r = q * q
    a, b = _A, _B
    num = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
    den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    return num / den


def chi2_quantile_wh(m: int, alpha: float) -> float:
    """Wilson-Hilferty approximation to the alpha-quantile of chi-square(m)."""
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise ValueError(f"degrees of freedom must be an integer >= 1, got {m}")
    m = int(m)
    z = inverse_normal(alpha)
    h = 2.0 / (9.0 * m)
    base = 1.0 - h + z * math.sqrt(h)
    # the cube goes negative only for tiny m and alpha far in the lower tail
    return m * max(base, 0.0) ** 3


def pearson_statistic(counts, p0) -> float:
    """n * sum_k (phat_k - p0_k)^2 / p0_k."""
    c = np.asarray(counts, dtype=float)
    p = np.asarray(p0, dtype=float)
    if c.shape != p.shape or c.ndim != 1:
        raise ValueError("counts and p0 must be 1-d with equal length")
    if np.any(p <= 0):
        raise ValueError("p0 must be strictly positive")
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    n = c.sum()
    if n <= 0:
        raise ValueError("total count must be positive")
    phat = c / n
    return float(n * np.sum((phat - p) ** 2 / p))


@dataclass(frozen=True)
class RadiusSchedule:
    """Either ``calibrated`` (eps_n = chi2_{K-1,alpha}/n) or ``fast`` (eps_n = c n^-2).

    ``kind == "fixed"`` holds a constant radius and exists for control runs
    (ERM with value 0, full coverage with ``inf``).
    """

    kind: str
    param: float
    K: int = 15

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.kind == "calibrated":
            if not 0.0 < self.param < 1.0:
                raise ValueError("calibrated alpha must lie in (0, 1)")
        elif self.kind == "fast":
            if not self.param > 0.0:
                raise ValueError("fast schedule constant must be positive")
        elif self.kind == "fixed":
            if not self.param >= 0.0:
                raise ValueError("fixed radius must be nonnegative")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def calibrated(cls, alpha: float, K: int = 15) -> "RadiusSchedule":
        return cls("calibrated", float(alpha), K)

    @classmethod
    def fast(cls, c: float = 0.7, K: int = 15) -> "RadiusSchedule":
        return cls("fast", float(c), K)

    @classmethod
    def fixed(cls, eps: float, K: int = 15) -> "RadiusSchedule":
        return cls("fixed", float(eps), K)

    @property
    def label(self) -> str:
        if self.kind == "calibrated":
            return f"calibrated({self.param:g})"
        if self.kind == "fast":
            return f"fast({self.param:g})"
        return f"fixed({self.param:g})"


def radius(schedule: RadiusSchedule, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    if schedule.kind == "calibrated":
        return chi2_quantile_wh(schedule.K - 1, schedule.param) / n
    if schedule.kind == "fast":
        return schedule.param / float(n) ** 2
    return schedule.param


def parse_schedule(text: str, K: int = 15) -> RadiusSchedule:
    """Parse ``calibrated:0.9``, ``fast:0.7`` or ``fixed:0``."""
    kind, _, value = text.partition(":")
    if not value:
        raise ValueError(f"schedule must look like kind:value, got {text!r}")
    return RadiusSchedule(kind.strip(), float(value), K)
