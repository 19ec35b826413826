"""Radius-coverage studies and the synthetic alignment sweep.

Every experiment returns an ``ExperimentTable`` in long format: one row per
(series, key, metric). Replications are independent tasks keyed by their
coordinates; aggregation sorts by key, so results do not depend on how many
worker processes ran them.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import RadiusSchedule, chi2_quantile_wh, pearson_statistic, radius
from .inner import AmbiguitySpec, mixture_chi2_argmax
from .losses import group_losses
from .numerics import fit_loglog_slope, make_rng
from .simulator import (
    MixtureEnv,
    make_preference_env,
    mixture_reward,
    sample_dataset,
    sample_prompts,
)
from .trainer import TrainConfig, train_preference, train_radius_coverage

DEFAULT_NS = (1000, 2000, 4000, 8000, 16000)

# stream families; each is offset by ENV_STRIDE * env_seed
COVER_SEED = 1000
TRAIN_SEED = 9999
EVAL_SEED = 5000
ENV_STRIDE = 100_000

CSV_COLUMNS = ("series", "key", "metric", "mean", "stderr", "reps")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class ExperimentTable:
    name: str
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, series, key, metric, mean, stderr, reps):
        self.rows.append((str(series), key, str(metric), float(mean), float(stderr), int(reps)))

    def add_sample(self, series, key, metric, values):
        v = np.asarray(values, dtype=float)
        se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else math.nan
        self.add(series, key, metric, v.mean(), se, v.size)

    def select(self, series=None, metric=None, key=None):
        out = []
        for r in self.rows:
            if series is not None and r[0] != series:
                continue
            if metric is not None and r[2] != metric:
                continue
            if key is not None and r[1] != key:
                continue
            out.append(r)
        return out

    def value(self, series, key, metric) -> float:
        rows = self.select(series, metric, key)
        if len(rows) != 1:
            raise KeyError((series, key, metric))
        return rows[0][3]

    def series(self):
        seen = []
        for r in self.rows:
            if r[0] not in seen:
                seen.append(r[0])
        return seen

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s, k, m, mean, se, reps in self.rows:
            w.writerow([s, fmt(k) if not isinstance(k, str) else k, m, fmt(mean), fmt(se), reps])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())


def _base(offset: int, env_seed) -> int:
    return offset + ENV_STRIDE * int(env_seed or 0)


def _run_tasks(fn, tasks, jobs: int):
    """Map ``fn`` over keyed tasks; returns {key: result} independent of ``jobs``."""
    keys = [k for k, _ in tasks]
    args = [a for _, a in tasks]
    if jobs <= 1 or len(tasks) <= 1:
        results = [fn(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(fn, *zip(*args), chunksize=max(1, len(args) // (4 * jobs))))
    return dict(zip(keys, results))


# ---------------------------------------------------------------------------
# coverage


def _pearson_draw(p0, n, base, rep):
    counts = make_rng(base, rep, n).multinomial(n, p0)
    return pearson_statistic(counts, p0)


def pearson_draws(env: MixtureEnv, n: int, reps: int, jobs: int = 1) -> np.ndarray:
    base = _base(COVER_SEED, env.seed)
    res = _run_tasks(_pearson_draw, [(r, (env.p0, n, base, r)) for r in range(reps)], jobs)
    return np.array([res[r] for r in range(reps)])


def coverage_curve(env: MixtureEnv, schedules, ns=DEFAULT_NS, reps: int = 120,
                   jobs: int = 1) -> ExperimentTable:
    """Fraction of multinomial draws whose Pearson statistic is <= n * eps_n.

    The same draws are scored against every schedule.
    """
    table = ExperimentTable("coverage", metadata={
        "env_seed": env.seed, "reps": reps, "ns": list(ns),
        "schedules": [s.label for s in schedules]})
    draws = {n: pearson_draws(env, n, reps, jobs) for n in ns}
    for s in schedules:
        for n in ns:
            hit = (draws[n] <= n * radius(s, n)).astype(float)
            table.add_sample(s.label, n, "coverage", hit)
    return table


# ---------------------------------------------------------------------------
# rate


def _train_error(env, n, s, rho, steps, lr):
    data = sample_dataset(env, n, make_rng(_base(TRAIN_SEED, env.seed), s, n))
    theta = train_radius_coverage(data, rho, TrainConfig(steps=steps, lr=lr))
    return float(np.linalg.norm(theta - env.theta_star))


def rate_curve(env: MixtureEnv, schedules, ns=DEFAULT_NS, seeds: int = 8,
               steps: int = 500, lr: float = 0.12, jobs: int = 1) -> ExperimentTable:
    """Parameter error against n per schedule, plus the fitted log-log slope.

    Seed ``s`` at size ``n`` uses the same training draw for every schedule.
    """
    table = ExperimentTable("rate", metadata={
        "env_seed": env.seed, "seeds": seeds, "ns": list(ns), "steps": steps, "lr": lr,
        "schedules": [s.label for s in schedules]})
    tasks = [((i, n, s), (env, n, s, radius(sch, n), steps, lr))
             for i, sch in enumerate(schedules) for n in ns for s in range(seeds)]
    res = _run_tasks(_train_error, tasks, jobs)
    for i, sch in enumerate(schedules):
        means = []
        for n in ns:
            errs = [res[(i, n, s)] for s in range(seeds)]
            table.add_sample(sch.label, n, "param_error", errs)
            means.append(float(np.mean(errs)))
        table.add(sch.label, "all", "loglog_slope", fit_loglog_slope(ns, means), math.nan, seeds)
    return table


def rate_slopes(table: ExperimentTable) -> dict:
    return {r[0]: r[3] for r in table.select(metric="loglog_slope")}


# ---------------------------------------------------------------------------
# risk-coverage frontier


def population_group_losses(env: MixtureEnv, theta) -> np.ndarray:
    """E[(v^T theta - t)^2 | group k] in closed form."""
    delta = np.asarray(theta, float) - env.theta_star
    proj = env.means @ delta
    return proj ** 2 + env.feature_scale ** 2 * float(delta @ delta) + env.sigmas ** 2


def eval_group_losses(env: MixtureEnv, theta, eval_data) -> np.ndarray:
    """Per-group losses on fresh data; groups absent from it use the closed form."""
    a = group_losses(eval_data, theta)
    empty = eval_data.counts == 0
    if np.any(empty):
        a[empty] = population_group_losses(env, theta)[empty]
    return a


def excess_risk(env: MixtureEnv, group_loss, eps: float) -> float:
    sol = mixture_chi2_argmax(group_loss, env.p0, eps)
    return sol.value - float(env.p0 @ group_loss)


def _frontier_model(env, n, s, rho, steps, lr, eval_n):
    data = sample_dataset(env, n, make_rng(_base(TRAIN_SEED, env.seed), s, n))
    theta = train_radius_coverage(data, rho, TrainConfig(steps=steps, lr=lr))
    fresh = sample_dataset(env, eval_n, make_rng(_base(EVAL_SEED, env.seed), s, eval_n))
    return eval_group_losses(env, theta, fresh)


def frontier(env: MixtureEnv, n: int = 16000, grid: int = 25, reps_cover: int = 400,
             seeds: int = 8, eval_n: int = 25000, anchors=(0.90, 0.95),
             steps: int = 500, lr: float = 0.12, jobs: int = 1) -> ExperimentTable:
    """Coverage and excess worst-case risk along eps = c / n.

    Grid points form series ``grid``; calibrated anchors c = chi2_{K-1,alpha}
    form series ``calibrated(alpha)``. ``excess`` retrains at every c;
    ``excess_common`` scores the c = 0 models at every c, so it is monotone
    in c by nesting of the balls.
    """
    m = env.K - 1
    c_max = chi2_quantile_wh(m, 0.99)
    points = [("grid", float(c)) for c in np.linspace(0.0, c_max, grid)]
    points += [(f"calibrated({a:g})", chi2_quantile_wh(m, a)) for a in anchors]
    table = ExperimentTable("frontier", metadata={
        "env_seed": env.seed, "n": n, "grid": grid, "reps_cover": reps_cover, "seeds": seeds,
        "eval_n": eval_n, "c_max": c_max, "anchors": list(anchors)})

    stats = pearson_draws(env, n, reps_cover, jobs)
    tasks = [((j, s), (env, n, s, c / n, steps, lr, eval_n))
             for j, (_, c) in enumerate(points) for s in range(seeds)]
    res = _run_tasks(_frontier_model, tasks, jobs)
    base_idx = 0  # first grid point is c = 0
    for j, (series, c) in enumerate(points):
        eps = c / n
        table.add_sample(series, c, "coverage", (stats <= c).astype(float))
        table.add_sample(series, c, "excess",
                         [excess_risk(env, res[(j, s)], eps) for s in range(seeds)])
        table.add_sample(series, c, "excess_common",
                         [excess_risk(env, res[(base_idx, s)], eps) for s in range(seeds)])
    return table


# ---------------------------------------------------------------------------
# alignment sweep

LOSSES = ("dpo", "rebel")
VARIANTS = ("none", "wasserstein", "kl", "chi2")
DEFAULT_ROBUST = {"wasserstein": 0.5, "kl": 1.0, "chi2": 0.5}
# DPO gradients carry a factor beta where REBEL's carry 1/eta, so DPO needs a
# much larger step to leave the reference policy within the epoch budget.
DEFAULT_LR = {"rebel": 1e-2, "dpo": 10.0}


def variant_spec(variant: str, params=None):
    params = {**DEFAULT_ROBUST, **(params or {})}
    if variant == "none":
        return None
    return AmbiguitySpec(variant, params[variant])


def _align_task(env_seed, loss, variant, params, lr, epochs, batch, bound, eta, beta,
                alpha0, mixing, alphas, eval_prompts, d, n_actions):
    env = make_preference_env(env_seed, d=d, n_actions=n_actions)
    cfg = TrainConfig(lr=lr, epochs=epochs, batch=batch, bound=bound, eta=eta, beta=beta)
    run = train_preference(env, loss, variant_spec(variant, params), cfg, alpha0, mixing,
                           seed=0, base_seed=_base(TRAIN_SEED, env_seed))
    prompts = sample_prompts(env, eval_prompts, make_rng(_base(EVAL_SEED, env_seed)))
    means, ses = mixture_reward(run.theta, env, prompts, alphas, mixing)
    return run.theta, means, ses


def alignment_sweep(env_seed: int = 0, losses=LOSSES, variants=VARIANTS, alpha0: float = 0.1,
                    alphas=None, mixing: str = "convex", params=None, lr=None,
                    epochs: int = 40, batch: int = 64, bound: float | None = 10.0,
                    eta: float = 0.01, beta: float = 0.1, eval_prompts: int = 64,
                    d: int = 8, n_actions: int = 16, jobs: int = 1) -> ExperimentTable:
    """Train every (loss, variant) at alpha0 and score the policy across alpha."""
    if alphas is None:
        alphas = tuple(round(0.1 * i, 10) for i in range(11))
    lr_map = {**DEFAULT_LR, **(lr or {})}
    params = {**DEFAULT_ROBUST, **(params or {})}
    table = ExperimentTable("align", metadata={
        "env_seed": env_seed, "alpha0": alpha0, "mixing": mixing, "epochs": epochs,
        "batch": batch, "bound": bound, "eta": eta, "beta": beta, "eval_prompts": eval_prompts,
        "lr": lr_map, "params": params, "d": d, "n_actions": n_actions})
    tasks = [((loss, v), (env_seed, loss, v, params, lr_map[loss], epochs, batch, bound, eta,
                          beta, alpha0, mixing, tuple(alphas), eval_prompts, d, n_actions))
             for loss in losses for v in variants]
    res = _run_tasks(_align_task, tasks, jobs)
    for loss in losses:
        for v in variants:
            _, means, ses = res[(loss, v)]
            name = method_name(loss, v)
            for a, m, s in zip(alphas, means, ses):
                table.add(name, float(a), "mixture_reward", m, s, eval_prompts)
            j = int(np.argmin(means))
            table.add(name, "worst", "worst_reward", means[j], ses[j], eval_prompts)
    return table


def method_name(loss: str, variant: str) -> str:
    return loss if variant == "none" else f"{variant}-{loss}"
