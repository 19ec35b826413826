"""Robust gradient assembly and the two training loops.

Inner solutions (mixture weights, tilt weights, chi-square shift) are held
fixed while differentiating, so each gradient is the weighted sum of
per-sample or per-group gradients at the current worst case.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .inner import (
    AmbiguitySpec,
    chi2_dual_solve,
    kl_tilt_weights,
    mixture_chi2_argmax,
    wasserstein_penalty,
)
from .numerics import make_rng
from .simulator import GroupedDataset, PreferenceEnv, sample_preferences


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = 0.12
    bound: float | None = None
    # preference loop
    epochs: int = 40
    batch: int = 64
    eta: float = 0.01
    beta: float = 0.1

    def __post_init__(self):
        if self.steps < 1 or self.epochs < 1 or self.batch < 1:
            raise ValueError("steps, epochs and batch must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.bound is not None and not self.bound > 0:
            raise ValueError("projection bound must be positive")


def project_ball(theta: np.ndarray, bound: float | None) -> np.ndarray:
    if bound is None:
        return theta
    norm = float(np.linalg.norm(theta))
    if norm > bound:
        return theta * (bound / norm)
    return theta


# ---------------------------------------------------------------------------
# grouped regression


def _group_weights(dataset: GroupedDataset, a: np.ndarray, rho: float, mode: str = "kkt"):
    """Worst-case mixture over nonempty groups; empty groups keep zero mass."""
    active = dataset.counts > 0
    q = np.zeros(dataset.K)
    if active.sum() == 1:
        q[active] = 1.0
        return q, float(a[active][0])
    sol = mixture_chi2_argmax(a[active], dataset.phat[active], rho, mode=mode)
    q[active] = sol.weights
    return q, sol.value


def robust_group_objective(theta, dataset: GroupedDataset, rho: float) -> float:
    a = L.group_losses(dataset, theta)
    return _group_weights(dataset, a, rho)[1]


def robust_group_gradient(theta, dataset: GroupedDataset, spec: AmbiguitySpec | float | None,
                          mode: str = "kkt", return_info: bool = False):
    """Gradient of max_q sum_k q_k L_k(theta) with q in the chi-square ball around phat."""
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    rho = _mixture_radius(spec)
    theta = np.asarray(theta, dtype=float)
    r = dataset.features @ theta - dataset.targets
    sq = np.bincount(dataset.groups, weights=r * r, minlength=dataset.K)
    counts = dataset.counts
    a = np.divide(sq, counts, out=np.zeros(dataset.K), where=counts > 0)
    q, value = _group_weights(dataset, a, rho, mode)
    coef = np.divide(2.0 * q, counts, out=np.zeros(dataset.K), where=counts > 0)
    grad = dataset.features.T @ (coef[dataset.groups] * r)
    if return_info:
        return grad, {"value": value, "q": q, "group_losses": a}
    return grad


def _mixture_radius(spec) -> float:
    if spec is None:
        return 0.0
    if isinstance(spec, AmbiguitySpec):
        if spec.kind != "mixture_chi2":
            raise ValueError("grouped training supports only mixture_chi2 ambiguity")
        return spec.param
    return float(spec)


def train_radius_coverage(dataset: GroupedDataset, spec, config: TrainConfig = TrainConfig(),
                          theta_star=None, log_path=None) -> np.ndarray:
    """Full-batch robust gradient descent from theta = 0."""
    theta = np.zeros(dataset.features.shape[1])
    rows = []
    for step in range(config.steps):
        grad, info = robust_group_gradient(theta, dataset, spec, return_info=True)
        if log_path is not None:
            err = float(np.linalg.norm(theta - theta_star)) if theta_star is not None else math.nan
            rows.append((step, info["value"], err))
        theta = project_ball(theta - config.lr * grad, config.bound)
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "objective", "param_error"])
            for step, val, err in rows:
                w.writerow([step, repr(float(val)), repr(err)])
    return theta


# ---------------------------------------------------------------------------
# preference losses


@dataclass
class BatchObjective:
    """Robust batch objective and its gradient at one parameter value."""

    value: float
    grad: np.ndarray
    weights: np.ndarray
    mean_loss: float
    extra: dict = field(default_factory=dict)


def _per_sample(loss: str, batch, theta, anchor, cfg: TrainConfig):
    dpsi = batch.dpsi
    if loss == "rebel":
        return (L.rebel_losses(dpsi, batch.dr, theta, anchor, cfg.eta),
                L.rebel_grads(dpsi, batch.dr, theta, anchor, cfg.eta))
    if loss == "dpo":
        return (L.dpo_losses(dpsi, batch.y, theta, anchor, cfg.beta),
                L.dpo_grads(dpsi, batch.y, theta, anchor, cfg.beta))
    raise ValueError(f"unknown loss {loss!r}")


def _input_grad_sqnorms(loss: str, batch, theta, anchor, cfg: TrainConfig):
    """||grad_z l_i||^2 over the data coordinates and its theta-gradient.

    REBEL: z = (dpsi, dr); l = g^2 with g = delta^T dpsi / eta - dr, so
    ||grad_z l||^2 = 4 g^2 (||delta||^2 / eta^2 + 1).
    DPO: z = dpsi; l = softplus(-s beta delta^T dpsi), so
    ||grad_z l||^2 = beta^2 sig(-s beta h)^2 ||delta||^2.
    """
    delta = np.asarray(theta, float) - np.asarray(anchor, float)
    dd = float(delta @ delta)
    dpsi = batch.dpsi
    if loss == "rebel":
        eta = cfg.eta
        g = L.rebel_residual(dpsi, batch.dr, theta, anchor, eta)
        c = dd / eta ** 2 + 1.0
        sq = 4.0 * g * g * c
        dsq = (8.0 * g * c / eta)[:, None] * dpsi + (8.0 * g * g / eta ** 2)[:, None] * delta
        return sq, dsq
    beta = cfg.beta
    s = 2.0 * np.asarray(batch.y, float) - 1.0
    h = dpsi @ delta
    sg = L.sigmoid(-s * beta * h)
    sq = beta ** 2 * sg * sg * dd
    dsg = (sg * (1.0 - sg) * (-s * beta))[:, None] * dpsi
    dsq = beta ** 2 * (2.0 * sg * dd)[:, None] * dsg + beta ** 2 * (sg * sg)[:, None] * (2.0 * delta)
    return sq, dsq


def batch_objective(loss: str, spec: AmbiguitySpec | None, batch, theta, anchor,
                    cfg: TrainConfig) -> BatchObjective:
    """Robust objective on one batch and the gradient used for the update.

    ``value`` is the function the gradient differentiates: the chi-square
    dual value, the KL log-partition potential, or mean loss plus the
    Wasserstein penalty.
    """
    ell, grads = _per_sample(loss, batch, theta, anchor, cfg)
    n = ell.size
    mean = float(ell.mean())
    if spec is None:
        w = np.full(n, 1.0 / n)
        return BatchObjective(mean, w @ grads, w, mean)
    if spec.kind == "chi2":
        sol = chi2_dual_solve(ell, spec.param)
        return BatchObjective(sol.value, sol.weights @ grads, sol.weights, mean,
                              {"eta": sol.dual["eta"], "weighted_loss": sol.value})
    if spec.kind == "kl":
        sol = kl_tilt_weights(ell, spec.param)
        return BatchObjective(sol.dual["potential"], sol.weights @ grads, sol.weights, mean,
                              {"weighted_loss": sol.value})
    if spec.kind == "wasserstein":
        w = np.full(n, 1.0 / n)
        sq, dsq = _input_grad_sqnorms(loss, batch, theta, anchor, cfg)
        pen = wasserstein_penalty(sq, spec.param)
        grad = w @ grads
        G = float(sq.mean())
        if G > 0 and spec.param > 0:
            grad = grad + spec.param / (2.0 * math.sqrt(G)) * dsq.mean(axis=0)
        return BatchObjective(mean + pen, grad, w, mean, {"penalty": pen})
    raise ValueError(f"ambiguity kind {spec.kind!r} does not apply to preference losses")


@dataclass
class PreferenceRun:
    theta: np.ndarray
    trajectory: np.ndarray
    history: list


def train_preference(env: PreferenceEnv, loss: str, spec: AmbiguitySpec | None,
                     cfg: TrainConfig, alpha0: float = 0.1, mixing: str = "convex",
                     seed: int = 0, base_seed: int = 20000) -> PreferenceRun:
    """One gradient step per fresh batch, for ``cfg.epochs`` batches.

    REBEL anchors its log-ratio at the iterate that opened the batch; DPO
    anchors at the reference policy theta = 0. Batches come from the
    reference policy, so every method sees the same data stream for a seed.
    """
    d = env.d
    theta = np.zeros(d)
    ref = np.zeros(d)
    traj = [theta.copy()]
    history = []
    for epoch in range(cfg.epochs):
        batch = sample_preferences(env, cfg.batch, alpha0, mixing,
                                   make_rng(base_seed + 100_000 * seed, epoch, 0))
        anchor = theta.copy() if loss == "rebel" else ref
        obj = batch_objective(loss, spec, batch, theta, anchor, cfg)
        weighted = float(obj.weights @ _per_sample(loss, batch, theta, anchor, cfg)[0])
        history.append({"epoch": epoch, "objective": obj.value, "mean_loss": obj.mean_loss,
                        "weighted_loss": weighted})
        theta = project_ball(theta - cfg.lr * obj.grad, cfg.bound)
        traj.append(theta.copy())
    return PreferenceRun(theta, np.asarray(traj), history)
