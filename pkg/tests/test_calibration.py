import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import normal_quantile, wilson_hilferty
from robustpref.calibration import (
    RadiusSchedule,
    chi2_quantile_wh,
    inverse_normal,
    parse_schedule,
    pearson_statistic,
    radius,
)

# Wilson-Hilferty with m = 14, computed with the bisection oracle
WH14 = {0.5: 13.343859354441367, 0.9: 21.048086135522873,
        0.95: 23.67315020729611, 0.99: 29.16919336462655}


@given(st.floats(1e-10, 1 - 1e-10))
def test_inverse_normal_matches_bisection(p):
    z = normal_quantile(p)
    assert inverse_normal(p) == pytest.approx(z, rel=2e-9, abs=2e-9)


def test_inverse_normal_known_points():
    assert inverse_normal(0.5) == 0.0
    assert inverse_normal(0.975) == pytest.approx(1.9599639845400536, rel=1e-9)
    assert inverse_normal(0.01) == pytest.approx(-2.3263478740408416, rel=1e-9)


@given(st.floats(1e-6, 0.5 - 1e-9))
def test_inverse_normal_is_odd(p):
    assert inverse_normal(p) == pytest.approx(-inverse_normal(1 - p), rel=1e-10, abs=1e-12)  # 1 - p rounds


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_inverse_normal_domain(p):
    with pytest.raises(ValueError):
        inverse_normal(p)


@pytest.mark.parametrize("alpha", sorted(WH14))
def test_wilson_hilferty_frozen(alpha):
    assert chi2_quantile_wh(14, alpha) == pytest.approx(WH14[alpha], rel=1e-8)


@pytest.mark.parametrize("alpha", [0.5, 0.9, 0.95, 0.99])
def test_wilson_hilferty_close_to_exact_quantile(alpha):
    from scipy.stats import chi2
    assert chi2_quantile_wh(14, alpha) == pytest.approx(chi2.ppf(alpha, 14), rel=5e-3)


@given(st.integers(1, 200), st.floats(0.01, 0.99))
def test_wilson_hilferty_oracle_agreement(m, alpha):
    assert chi2_quantile_wh(m, alpha) == pytest.approx(wilson_hilferty(m, alpha), rel=1e-7, abs=1e-9)


@pytest.mark.parametrize("m", [0, -3, 2.5, True])
def test_wilson_hilferty_rejects_bad_df(m):
    with pytest.raises(ValueError):
        chi2_quantile_wh(m, 0.9)


def test_pearson_statistic_by_hand():
    counts = np.array([30, 50, 20])
    p0 = np.array([0.25, 0.5, 0.25])
    expected = 100 * ((0.3 - 0.25) ** 2 / 0.25 + 0 + (0.2 - 0.25) ** 2 / 0.25)
    assert pearson_statistic(counts, p0) == pytest.approx(expected)


def test_pearson_statistic_validation():
    with pytest.raises(ValueError):
        pearson_statistic([1, 2], [0.0, 1.0])
    with pytest.raises(ValueError):
        pearson_statistic([0, 0], [0.5, 0.5])
    with pytest.raises(ValueError):
        pearson_statistic([1, 2, 3], [0.5, 0.5])


def test_schedules_and_labels():
    cal = RadiusSchedule.calibrated(0.9)
    fast = RadiusSchedule.fast(0.7)
    assert radius(cal, 1000) == pytest.approx(WH14[0.9] / 1000, rel=1e-8)
    assert radius(fast, 1000) == pytest.approx(0.7e-6)
    assert radius(RadiusSchedule.fixed(0.0), 50) == 0.0
    assert (cal.label, fast.label) == ("calibrated(0.9)", "fast(0.7)")
    assert parse_schedule("fast:0.7") == fast
    assert parse_schedule("calibrated:0.9") == cal


@given(st.integers(1, 10**6))
def test_calibrated_schedule_times_n_is_constant(n):
    s = RadiusSchedule.calibrated(0.95)
    assert n * radius(s, n) == pytest.approx(WH14[0.95], rel=1e-8)


@pytest.mark.parametrize("args", [("calibrated", 1.0), ("calibrated", 0.0), ("fast", 0.0),
                                  ("fixed", -1.0), ("slow", 1.0)])
def test_schedule_validation(args):
    with pytest.raises(ValueError):
        RadiusSchedule(*args)


def test_parse_schedule_rejects_garbage():
    with pytest.raises(ValueError):
        parse_schedule("calibrated")
    with pytest.raises(ValueError):
        parse_schedule("fast:abc")


def test_well_conditioned_coverage_tracks_nominal():
    # with every n p0_k large the Pearson statistic is close to chi2(K-1)
    from robustpref.numerics import make_rng
    K, n, reps = 15, 8000, 400
    p0 = np.full(K, 1.0 / K)
    rng = make_rng(123)
    stats = np.array([pearson_statistic(rng.multinomial(n, p0), p0) for _ in range(reps)])
    for alpha in (0.5, 0.9, 0.95):
        cov = np.mean(stats <= chi2_quantile_wh(K - 1, alpha))
        assert abs(cov - alpha) <= 0.06, (alpha, cov)
    assert math.isfinite(stats.mean())


def test_coverage_invariant_on_default_environment():
    # Dir(0.3) mixture from the default environment seed; see the README
    # note on small cells for why this can over-cover at alpha = 0.5
    from robustpref.experiments import pearson_draws
    from robustpref.simulator import make_env
    env = make_env(0)
    stats = pearson_draws(env, 8000, 400)
    for alpha in (0.5, 0.9, 0.95):
        cov = float(np.mean(stats <= 8000 * radius(RadiusSchedule.calibrated(alpha), 8000)))
        assert abs(cov - alpha) <= 0.06, (alpha, cov)
