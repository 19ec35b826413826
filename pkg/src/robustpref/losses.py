"""Pointwise preference losses under log-linear policies and the per-group
squared losses of the mixture simulator."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class PreferenceSample:
    """One preference pair: feature gap, reward gap and label (1 = first preferred)."""

    dpsi: np.ndarray
    dr: float
    y: int


@dataclass(frozen=True)
class BoundConstants:
    B: float
    F: float
    eta: float

    def __post_init__(self):
        if min(self.B, self.F, self.eta) <= 0:
            raise ValueError("B, F and eta must all be positive")

    @property
    def K_g(self) -> float:
        return 8.0 * self.B / self.eta + 2.0 * self.F

    @property
    def K_l(self) -> float:
        return self.K_g ** 2

    @property
    def lipschitz(self) -> float:
        return 4.0 * self.K_g / self.eta


def bound_constants(B: float, F: float, eta: float) -> BoundConstants:
    return BoundConstants(float(B), float(F), float(eta))


def dpo_bound(beta: float, B: float) -> float:
    """Upper bound log(1 + e^{4 beta B}) on the DPO loss over the B-ball."""
    x = 4.0 * beta * B
    return x + math.log1p(math.exp(-x))


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-np.logaddexp(0.0, -x))


# --- REBEL ------------------------------------------------------------------
# Under pi_theta(a|x) ~ exp(theta^T psi(x, a)) the log-ratio difference is
# (theta - theta_t)^T dpsi, so the residual is linear in theta.


def rebel_residual(dpsi, dr, theta, theta_t, eta):
    if not eta > 0:
        raise ValueError("REBEL step size eta must be positive")
    dpsi = np.asarray(dpsi, dtype=float)
    delta = np.asarray(theta, dtype=float) - np.asarray(theta_t, dtype=float)
    return dpsi @ delta / eta - np.asarray(dr, dtype=float)


def rebel_losses(dpsi, dr, theta, theta_t, eta) -> np.ndarray:
    """Vectorized squared residuals for a batch (rows of ``dpsi``)."""
    g = rebel_residual(dpsi, dr, theta, theta_t, eta)
    return g * g


def rebel_loss(sample: PreferenceSample, theta, theta_t, eta: float) -> float:
    return float(rebel_losses(sample.dpsi, sample.dr, theta, theta_t, eta))


def rebel_grads(dpsi, dr, theta, theta_t, eta) -> np.ndarray:
    """Per-sample gradients 2 g dpsi / eta, shape (n, d)."""
    g = rebel_residual(dpsi, dr, theta, theta_t, eta)
    return (2.0 * g / eta)[:, None] * np.atleast_2d(dpsi)


# --- DPO --------------------------------------------------------------------


def dpo_margin(dpsi, theta, theta_ref):
    return np.asarray(dpsi, dtype=float) @ (np.asarray(theta, float) - np.asarray(theta_ref, float))


def dpo_losses(dpsi, y, theta, theta_ref, beta) -> np.ndarray:
    """-y log sig(beta h) - (1-y) log sig(-beta h), written with softplus."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    h = dpo_margin(dpsi, theta, theta_ref)
    sign = 2.0 * np.asarray(y, dtype=float) - 1.0
    return softplus(-sign * beta * h)


def dpo_loss(sample: PreferenceSample, theta, theta_ref, beta: float) -> float:
    return float(dpo_losses(sample.dpsi, sample.y, theta, theta_ref, beta))


def dpo_grads(dpsi, y, theta, theta_ref, beta) -> np.ndarray:
    h = dpo_margin(dpsi, theta, theta_ref)
    y = np.asarray(y, dtype=float)
    coef = beta * (sigmoid(beta * h) - y)
    return coef[:, None] * np.atleast_2d(dpsi)


# --- policies and grouped regression ----------------------------------------


def log_linear_policy(theta, action_features) -> np.ndarray:
    feats = np.asarray(action_features, dtype=float)
    if feats.ndim == 1:
        feats = feats[None, :]
    if feats.shape[0] == 0:
        raise ValueError("need at least one action")
    if np.any(np.linalg.norm(feats, axis=1) > 1.0 + 1e-12):
        warnings.warn("action features exceed unit norm", RuntimeWarning, stacklevel=2)
    logits = feats @ np.asarray(theta, dtype=float)
    logits = logits - logits.max()
    e = np.exp(logits)
    return e / e.sum()


def group_losses(dataset, theta) -> np.ndarray:
    """Per-group mean squared residual; empty groups report 0."""
    r = dataset.features @ np.asarray(theta, dtype=float) - dataset.targets
    sums = np.bincount(dataset.groups, weights=r * r, minlength=dataset.K)
    counts = dataset.counts
    out = np.zeros(dataset.K)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz]
    return out


def group_gradients(dataset, theta) -> np.ndarray:
    """Per-group gradients of the mean squared residual, shape (K, d)."""
    r = dataset.features @ np.asarray(theta, dtype=float) - dataset.targets
    rv = 2.0 * r[:, None] * dataset.features
    G = np.stack([np.bincount(dataset.groups, weights=rv[:, j], minlength=dataset.K)
                  for j in range(rv.shape[1])], axis=1)
    counts = dataset.counts
    nz = counts > 0
    G[nz] /= counts[nz, None]
    return G
