import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_bias.core import Theta, logistic_prob
from adaptive_bias.estimators import (
    FitResult,
    RankDeficiencyError,
    SeparationError,
    fit_logistic_mle,
    fit_nonparametric,
    loglik_logistic,
    run_estimator,
    score_logistic,
    two_stage_estimate,
)
from adaptive_bias.estimators.latent_class import conditional_loglik
from adaptive_bias.estimators.logistic import check_separation, grouped_data
from adaptive_bias.sim import ScenarioConfig, SufficientCounts, simulate_dataset


def central_diff(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(g, ref):
    return np.max(np.abs(g - ref)) / max(np.max(np.abs(ref)), 1.0)


def test_nonparametric_ratio_and_empty_cell():
    fit = fit_nonparametric(SufficientCounts(np.array([[10, 0]]), np.array([[3, 0]])))
    assert fit.pi_hat[0] == 0.3
    assert np.isnan(fit.pi_hat[1])
    np.testing.assert_array_equal(fit.estimable, [True, False])


def test_nonparametric_all_correct():
    fit = fit_nonparametric(SufficientCounts(np.array([[4, 2, 0]]), np.array([[4, 2, 0]])))
    np.testing.assert_array_equal(fit.pi_hat[:2], [1.0, 1.0])


def test_loglik_single_trial():
    assert loglik_logistic(Theta(0, 1), np.array([0.0]), np.array([1])) == pytest.approx(np.log(0.5))


def test_two_point_closed_form():
    x, y, n = np.array([-1.0, 1.0]), np.array([1, 3]), np.array([4, 4])
    fit = fit_logistic_mle(x, y, n)
    assert fit["a"] == pytest.approx(0.0, abs=1e-10)
    assert fit["b"] == pytest.approx(np.log(3), abs=1e-10)
    assert fit.converged
    assert np.max(np.abs(score_logistic(Theta(0.0, np.log(3)), x, y, n))) < 1e-10
    # observed information at the MLE: sum n p (1 - p) [1 x; x x^2] with p(1-p) = 3/16
    info = 8 * 3 / 16 * np.eye(2)
    np.testing.assert_allclose(fit.standard_errors["a"], np.sqrt(1 / info[0, 0]), rtol=1e-6)


def test_grouped_and_trialwise_agree():
    data = simulate_dataset(ScenarioConfig(scheme="UD", N=10, T=30, seed=1))
    x, m, n = grouped_data(data)
    f1 = fit_logistic_mle(x, m, n)
    f2 = fit_logistic_mle(data.intensities.ravel(), data.responses.ravel())
    assert f1["a"] == pytest.approx(f2["a"], abs=1e-9)
    assert f1["b"] == pytest.approx(f2["b"], abs=1e-8)
    assert f1.loglik == pytest.approx(f2.loglik, rel=1e-12)


def test_logistic_score_matches_finite_differences_randomized():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        K = rng.integers(2, 12)
        x = rng.uniform(-1, 1, K)
        n = rng.integers(1, 30, K)
        y = rng.binomial(n, rng.uniform(0.05, 0.95, K))
        th = rng.normal(0, 2, 2)
        g = score_logistic(Theta(*th), x, y, n)
        fd = central_diff(lambda v: loglik_logistic(Theta(*v), x, y, n), th)
        worst = max(worst, rel_err(g, fd))
    assert worst < 1e-6


@pytest.mark.parametrize("y", [[4, 4], [0, 0], [0, 4]])
def test_separation_detected(y):
    x, n = np.array([0.1, 0.2]), np.array([4, 4])
    assert check_separation(x, np.array(y), n) is not None
    with pytest.raises(SeparationError) as exc:
        fit_logistic_mle(x, np.array(y), n)
    assert "b" in str(exc.value) or "separation" in str(exc.value)


def test_single_intensity_rank_deficient():
    with pytest.raises(RankDeficiencyError):
        fit_logistic_mle(np.array([0.1, 0.1]), np.array([1, 0]))


def test_negative_slope_recovered():
    rng = np.random.default_rng(2)
    x = np.repeat(np.linspace(-1, 1, 9), 500)
    y = rng.random(x.size) < logistic_prob(Theta(0.3, -2.0), 0.0, x)
    fit = fit_logistic_mle(x, y.astype(int))
    assert fit["b"] == pytest.approx(-2.0, abs=4 * fit.standard_errors["b"])


def test_conditional_loglik_matches_logistic():
    data = simulate_dataset(ScenarioConfig(scheme="FD", N=3, T=40, seed=3))
    th = Theta(0.2, 5.0)
    pi = logistic_prob(th, 0.0, data.grid.values)
    x, m, n = grouped_data(data)
    total = conditional_loglik(pi, np.bincount(data.levels.ravel() - 1, minlength=10),
                               np.bincount(data.levels.ravel() - 1, weights=data.responses.ravel(), minlength=10))
    assert total == pytest.approx(loglik_logistic(th, x, m, n), rel=1e-12)
    assert conditional_loglik(pi, np.zeros(10), np.zeros(10)) == 0.0


def test_two_stage_mean_and_exclusions():
    fits = [FitResult({"a": v}, {"a": 0.1}, 0.0, True, 1) for v in (1.0, 2.0, 3.0)]
    bad = FitResult({"a": 100.0}, {"a": 0.1}, 0.0, False, 100)
    res = two_stage_estimate(fits + [bad, None])
    assert res["a"] == 2.0
    assert res.info == {"n_used": 3, "n_excluded": 2}
    assert two_stage_estimate(fits[:1])["a"] == 1.0


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_two_stage_is_arithmetic_mean(vals):
    fits = [FitResult({"b": v}, {"b": 0.0}, 0.0, True, 1) for v in vals]
    assert two_stage_estimate(fits)["b"] == pytest.approx(np.mean(vals), abs=1e-12)


def test_registry_runs_every_estimator():
    data = simulate_dataset(ScenarioConfig(scheme="FDr", effect_model="latent", N=20, T=40, seed=4))
    for name in ("logistic", "random_intercept", "two_stage", "nonparametric", "latent_em"):
        fit = run_estimator(name, data, A=2.0)
        assert fit.estimates
    with pytest.raises(ValueError):
        run_estimator("nope", data)


def test_ed50_delta_method():
    data = simulate_dataset(ScenarioConfig(scheme="FD", N=50, T=50, seed=5))
    fit = run_estimator("logistic", data)
    assert fit["ed50"] == pytest.approx(-fit["a"] / fit["b"])
    assert fit.standard_errors["ed50"] > 0
