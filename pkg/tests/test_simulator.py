import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpref.losses import group_losses
from robustpref.simulator import (
    make_env,
    make_preference_env,
    mix_rewards,
    mixture_reward,
    sample_counts,
    sample_dataset,
    sample_preferences,
    sample_prompts,
)


@given(st.integers(0, 10**6))
@settings(max_examples=25)
def test_env_structure(seed):
    env = make_env(seed)
    assert (env.K, env.d, env.rank) == (15, 12, 3)
    assert np.linalg.norm(env.theta_star) == pytest.approx(1.0, abs=1e-12)
    assert np.all((env.sigmas >= 0.05) & (env.sigmas <= 0.35))
    assert np.allclose(env.U @ env.U.T, np.eye(3), atol=1e-10)
    assert np.allclose(np.linalg.norm(env.means, axis=1), 1.0)
    assert env.p0.sum() == pytest.approx(1.0)
    assert np.all(env.p0 > 0)


def test_env_deterministic():
    a, b = make_env(3), make_env(3)
    for f in ("p0", "U", "means", "sigmas", "theta_star"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(make_env(4).p0, a.p0)


@pytest.mark.parametrize("kw", [{"K": 1}, {"rank": 0}, {"rank": 13}])
def test_env_validation(kw):
    with pytest.raises(ValueError):
        make_env(0, **kw)


def test_dataset_shapes_and_counts():
    env = make_env(0)
    data = sample_dataset(env, 500, 1)
    assert data.features.shape == (500, 12)
    assert data.counts.sum() == 500
    assert np.allclose(data.phat, data.counts / 500)
    again = sample_dataset(env, 500, 1)
    assert np.array_equal(data.features, again.features)
    assert np.array_equal(data.targets, again.targets)


def test_noise_free_targets_and_zero_losses():
    env = make_env(0).noiseless(features=True)
    data = sample_dataset(env, 300, 2)
    assert np.allclose(data.targets, env.means[data.groups] @ env.theta_star, atol=0)
    env2 = make_env(0).noiseless()
    assert np.allclose(group_losses(sample_dataset(env2, 300, 2), env2.theta_star), 0.0, atol=1e-28)


def test_counts_within_multinomial_bands():
    env = make_env(0)
    n = 100_000
    c = sample_counts(env, n, 5)
    sd = np.sqrt(n * env.p0 * (1 - env.p0))
    assert np.all(np.abs(c - n * env.p0) <= 3 * sd + 1)


def test_dataset_csv_roundtrip(tmp_path):
    env = make_env(0)
    data = sample_dataset(env, 20, 0)
    path = tmp_path / "d.csv"
    data.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0].split(",")[0] == "group" and rows[0].split(",")[-1] == "t"
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 1:-1], data.features)
    assert np.array_equal(back[:, -1], data.targets)


def test_dataset_rejects_bad_input():
    env = make_env(0)
    with pytest.raises(ValueError):
        sample_dataset(env, 0, 0)
    from robustpref.simulator import GroupedDataset
    with pytest.raises(ValueError):
        GroupedDataset(np.array([0, 5]), np.zeros((2, 2)), np.zeros(2), 3)


# --- preferences -------------------------------------------------------------


def test_preference_env_geometry():
    env = make_preference_env(0, cos_angle=-0.3)
    assert np.linalg.norm(env.omega1) == pytest.approx(1.0)
    assert env.omega1 @ env.omega2 == pytest.approx(-0.3)
    assert env.F == pytest.approx(1.0)
    prompts = sample_prompts(env, 5, 0)
    assert prompts.shape == (5, 16, 8)
    assert np.allclose(np.linalg.norm(prompts, axis=2), 1.0)


@pytest.mark.parametrize("mixing", ["convex", "geometric"])
def test_preference_labels_follow_bradley_terry(mixing):
    env = make_preference_env(1)
    data = sample_preferences(env, 40_000, 0.3, mixing, seed=2)
    assert np.all(np.abs(data.dr) <= 2 * env.F + 1e-12)
    assert np.allclose(data.prob, 1 / (1 + np.exp(-data.dr)))
    edges = np.linspace(data.prob.min(), data.prob.max(), 6)
    idx = np.clip(np.digitize(data.prob, edges) - 1, 0, 4)
    for b in range(5):
        m = idx == b
        if m.sum() < 200:
            continue
        freq, centre = data.y[m].mean(), data.prob[m].mean()
        assert abs(freq - centre) <= 3 * math.sqrt(centre * (1 - centre) / m.sum())


def test_equal_rewards_give_fair_coin():
    env = make_preference_env(0)
    env.omega1 = np.zeros(env.d)
    env.omega2 = np.zeros(env.d)
    n = 20_000
    data = sample_preferences(env, n, 0.5, seed=3)
    assert np.all(data.prob == 0.5)
    assert abs(data.y.mean() - 0.5) <= 3 * 0.5 / math.sqrt(n)


def test_alpha_one_uses_first_objective_only():
    env = make_preference_env(0)
    data = sample_preferences(env, 100, 1.0, seed=4)
    assert np.allclose(data.dr, data.dpsi @ env.omega1)


def test_bt_hand_instance():
    from robustpref.losses import sigmoid
    assert float(sigmoid(math.log(3))) == pytest.approx(0.75)


def test_mix_rewards():
    assert mix_rewards(2.0, 4.0, 0.25, "convex") == pytest.approx(3.5)
    assert mix_rewards(2.0, 8.0, 0.5, "geometric") == pytest.approx(4.0)
    with pytest.raises(ValueError):
        mix_rewards(-1.0, 1.0, 0.5, "geometric")
    with pytest.raises(ValueError):
        mix_rewards(1.0, 1.0, 1.5, "convex")
    with pytest.raises(ValueError):
        mix_rewards(1.0, 1.0, 0.5, "harmonic")


def test_mixture_reward_convex_is_affine_in_alpha():
    env = make_preference_env(0)
    prompts = sample_prompts(env, 64, 9)
    alphas = np.linspace(0, 1, 11)
    theta = np.random.default_rng(0).standard_normal(env.d)
    means, ses = mixture_reward(theta, env, prompts, alphas)
    fit = np.polyfit(alphas, means, 1)
    resid = means - np.polyval(fit, alphas)
    r2 = 1 - resid.var() / means.var()
    assert r2 > 0.999
    assert np.all(ses > 0)


def test_uniform_policy_bracketed_by_objectives():
    env = make_preference_env(2)
    prompts = sample_prompts(env, 64, 1)
    means, _ = mixture_reward(np.zeros(env.d), env, prompts, [0.0, 0.5, 1.0])
    assert min(means[0], means[2]) - 1e-12 <= means[1] <= max(means[0], means[2]) + 1e-12


def test_preference_sampler_deterministic():
    env = make_preference_env(0)
    a = sample_preferences(env, 50, seed=11)
    b = sample_preferences(env, 50, seed=11)
    assert np.array_equal(a.dpsi, b.dpsi) and np.array_equal(a.y, b.y)
    assert len(a) == 50 and len(a.samples) == 50
