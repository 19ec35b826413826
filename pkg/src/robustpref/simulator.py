"""Synthetic environments.

``MixtureEnv`` is the grouped linear-regression testbed: K latent groups with
low-rank feature means, heteroscedastic target noise and a unit-norm true
parameter. ``PreferenceEnv`` is a linear-reward stand-in for a two-objective
alignment task: actions are unit vectors, rewards are linear in the action,
and preference labels follow Bradley-Terry on a mixed reward.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .losses import log_linear_policy, sigmoid
from .numerics import make_rng


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed))


def _dirichlet(rng: np.random.Generator, conc: float, K: int) -> np.ndarray:
    g = rng.gamma(conc, size=K)
    return g / g.sum()


@dataclass
class MixtureEnv:
    K: int
    d: int
    rank: int
    p0: np.ndarray
    U: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray
    theta_star: np.ndarray
    feature_scale: float = 0.35
    perturb_scale: float = 0.05
    seed: int | None = None

    def noiseless(self, features: bool = False) -> "MixtureEnv":
        """Copy with zero target noise (and zero feature noise if asked)."""
        return dataclasses.replace(
            self,
            sigmas=np.zeros_like(self.sigmas),
            feature_scale=0.0 if features else self.feature_scale,
        )


def make_env(seed=0, K: int = 15, d: int = 12, rank: int = 3,
             dirichlet_conc: float = 0.3, sigma_range=(0.05, 0.35),
             feature_scale: float = 0.35, perturb_scale: float = 0.05) -> MixtureEnv:
    if K < 2:
        raise ValueError("K must be at least 2")
    if not 1 <= rank <= d:
        raise ValueError(f"rank must lie in [1, d={d}], got {rank}")
    rng = _rng(seed)
    p0 = _dirichlet(rng, dirichlet_conc, K)
    # orthonormal rows via QR of the transpose
    Q, _ = np.linalg.qr(rng.standard_normal((d, rank)))
    U = Q.T
    C = rng.standard_normal((K, rank))
    means = C @ U + perturb_scale * rng.standard_normal((K, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    lo, hi = sigma_range
    sigmas = np.exp(rng.uniform(math.log(lo), math.log(hi), size=K))
    theta = rng.standard_normal(d)
    theta /= np.linalg.norm(theta)
    return MixtureEnv(K, d, rank, p0, U, means, sigmas, theta,
                      feature_scale, perturb_scale,
                      seed if not isinstance(seed, np.random.Generator) else None)


@dataclass
class GroupedDataset:
    groups: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    K: int

    def __post_init__(self):
        self.groups = np.asarray(self.groups, dtype=np.int64)
        if self.groups.size and (self.groups.min() < 0 or self.groups.max() >= self.K):
            raise ValueError("group labels must lie in [0, K)")
        self.counts = np.bincount(self.groups, minlength=self.K)

    @property
    def n(self) -> int:
        return int(self.groups.size)

    @property
    def phat(self) -> np.ndarray:
        return self.counts / self.n

    def to_csv(self, path) -> None:
        d = self.features.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group"] + [f"v_{j + 1}" for j in range(d)] + ["t"])
            for g, v, t in zip(self.groups, self.features, self.targets):
                w.writerow([int(g)] + [repr(float(x)) for x in v] + [repr(float(t))])


def sample_dataset(env: MixtureEnv, n: int, seed) -> GroupedDataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    groups = rng.choice(env.K, size=n, p=env.p0)
    feats = env.means[groups] + env.feature_scale * rng.standard_normal((n, env.d))
    targets = feats @ env.theta_star + env.sigmas[groups] * rng.standard_normal(n)
    return GroupedDataset(groups, feats, targets, env.K)


def sample_counts(env: MixtureEnv, n: int, seed) -> np.ndarray:
    """Group counts C ~ Multinomial(n, p0)."""
    return _rng(seed).multinomial(n, env.p0)


# ---------------------------------------------------------------------------
# preference environment


@dataclass
class PreferenceEnv:
    d: int
    n_actions: int
    omega1: np.ndarray
    omega2: np.ndarray
    seed: int | None = None

    @property
    def F(self) -> float:
        return float(max(np.linalg.norm(self.omega1), np.linalg.norm(self.omega2)))


def make_preference_env(seed=0, d: int = 8, n_actions: int = 16, F: float = 1.0,
                        cos_angle: float = -0.3) -> PreferenceEnv:
    """Two unit-norm (times F) reward directions with a fixed cosine between them."""
    rng = _rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(d)
    v -= (v @ u) * u
    v /= np.linalg.norm(v)
    w2 = cos_angle * u + math.sqrt(1.0 - cos_angle ** 2) * v
    return PreferenceEnv(d, n_actions, F * u, F * w2,
                         seed if not isinstance(seed, np.random.Generator) else None)


def sample_prompts(env: PreferenceEnv, n: int, seed) -> np.ndarray:
    """n prompts, each a set of ``n_actions`` unit-norm action features: (n, M, d)."""
    rng = _rng(seed)
    a = rng.standard_normal((n, env.n_actions, env.d))
    return a / np.linalg.norm(a, axis=2, keepdims=True)


def objective_rewards(env: PreferenceEnv, actions, mixing: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-objective rewards; squashed through a sigmoid for geometric mixing."""
    r1 = actions @ env.omega1
    r2 = actions @ env.omega2
    if mixing == "geometric":
        return sigmoid(r1), sigmoid(r2)
    if mixing != "convex":
        raise ValueError(f"unknown mixing {mixing!r}")
    return r1, r2


def mix_rewards(r1, r2, alpha: float, mixing: str):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("mixing coefficient must lie in [0, 1]")
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if mixing == "convex":
        return alpha * r1 + (1.0 - alpha) * r2
    if mixing == "geometric":
        if np.any(r1 <= 0) or np.any(r2 <= 0):
            raise ValueError("geometric mixing needs strictly positive rewards")
        return np.exp(alpha * np.log(r1) + (1.0 - alpha) * np.log(r2))
    raise ValueError(f"unknown mixing {mixing!r}")


@dataclass
class SyntheticPreferenceSet:
    psi1: np.ndarray
    psi2: np.ndarray
    dr: np.ndarray
    y: np.ndarray
    prob: np.ndarray
    mixing: str
    alpha0: float

    @property
    def dpsi(self) -> np.ndarray:
        return self.psi1 - self.psi2

    def __len__(self) -> int:
        return int(self.y.size)

    @property
    def samples(self):
        from .losses import PreferenceSample
        d = self.dpsi
        return [PreferenceSample(d[i], float(self.dr[i]), int(self.y[i])) for i in range(len(self))]


def sample_preferences(env: PreferenceEnv, n: int, alpha0: float = 0.1,
                       mixing: str = "convex", seed=0) -> SyntheticPreferenceSet:
    """Pairs drawn i.i.d. from the uniform reference policy, labelled by Bradley-Terry."""
    if not 0.0 <= alpha0 <= 1.0:
        raise ValueError("alpha0 must lie in [0, 1]")
    rng = _rng(seed)
    prompts = sample_prompts(env, n, rng)
    idx = rng.integers(env.n_actions, size=(n, 2))
    rows = np.arange(n)
    a1 = prompts[rows, idx[:, 0]]
    a2 = prompts[rows, idx[:, 1]]
    r = [mix_rewards(*objective_rewards(env, a, mixing), alpha0, mixing) for a in (a1, a2)]
    dr = r[0] - r[1]
    prob = sigmoid(dr)
    y = (rng.random(n) < prob).astype(np.int64)
    return SyntheticPreferenceSet(a1, a2, dr, y, prob, mixing, float(alpha0))


def mixture_reward(theta, env: PreferenceEnv, prompts, alphas, mixing: str = "convex"):
    """Expected mixed reward of the log-linear policy at each alpha.

    Action expectations are exact; the prompt average is the Monte-Carlo
    part. Returns ``(means, stderrs)`` over ``alphas``.
    """
    theta = np.asarray(theta, dtype=float)
    logits = prompts @ theta
    logits -= logits.max(axis=1, keepdims=True)
    pi = np.exp(logits)
    pi /= pi.sum(axis=1, keepdims=True)
    r1, r2 = objective_rewards(env, prompts, mixing)
    means, ses = [], []
    for alpha in alphas:
        per_prompt = np.sum(pi * mix_rewards(r1, r2, float(alpha), mixing), axis=1)
        means.append(per_prompt.mean())
        ses.append(per_prompt.std(ddof=1) / math.sqrt(per_prompt.size))
    return np.asarray(means), np.asarray(ses)


def policy_probs(theta, prompts) -> np.ndarray:
    return np.stack([log_linear_policy(theta, p) for p in prompts])
