import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_bias.bias import (
    LevelUnsampledError,
    bias_identity_check,
    enumerate_bias_identity,
    enumerate_weighted_bias_identity,
    summarize,
    weighted_bias_identity_check,
)
from adaptive_bias.core import IntensityGrid, Theta, logistic_prob
from adaptive_bias.sim import ScenarioConfig


def test_summarize_two_points():
    s = summarize([1.1, 0.9], 1.0)
    assert s.absBias == pytest.approx(0.0, abs=1e-15)
    assert s.SE == pytest.approx(np.sqrt(0.02))
    assert s.RMSE == pytest.approx(0.1414, abs=1e-4)
    assert s.R_effective == 2


def test_summarize_exact_estimates():
    s = summarize([2.0, 2.0, 2.0], 2.0)
    assert (s.absBias, s.relBias, s.SE, s.RMSE) == (0.0, 0.0, 0.0, 0.0)


def test_summarize_zero_truth():
    s = summarize([0.1, -0.1, 0.3], 0.0)
    assert not s.relBias_defined
    assert s.absBias == pytest.approx(0.1)


def test_summarize_needs_two_values():
    with pytest.raises(ValueError):
        summarize([1.0], 1.0)
    with pytest.raises(ValueError):
        summarize([1.0, 2.0, 3.0], 1.0, converged=[True, False, False])


def test_summarize_excludes_nonconverged():
    s = summarize([1.0, 3.0, 100.0], 2.0, converged=[True, True, False])
    assert s.absBias == 0.0 and s.R_effective == 2 and s.R_excluded == 1


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50), st.floats(-10, 10))
def test_rmse_decomposition(xs, truth):
    s = summarize(xs, truth)
    assert abs(s.RMSE**2 - (s.SE**2 + s.absBias**2)) <= 1e-10 * max(1.0, s.RMSE**2)
    assert s.RMSE >= abs(s.absBias)


def hand_enumeration(theta, grid):
    """UD, N=1, T=2: the eight (S1, Y1, Y2) outcomes written out directly."""
    pi = logistic_prob(theta, 0.0, grid.values)
    L = grid.L
    rows = []
    for s1, y1, y2 in itertools.product((1, 2), (0, 1), (0, 1)):
        s2 = min(max(s1 - (2 * y1 - 1), 1), L)
        p = 0.5 * (pi[s1 - 1] if y1 else 1 - pi[s1 - 1]) * (pi[s2 - 1] if y2 else 1 - pi[s2 - 1])
        rows.append((p, (s1, s2), (y1, y2)))
    assert len(rows) == 8
    out = {}
    for s in (1, 2):
        E_T = E_est = E_Test = 0.0
        for p, lv, ys in rows:
            T = sum(v == s for v in lv)
            m = sum(y for v, y in zip(lv, ys) if v == s)
            est = m / T if T else pi[s - 1]
            E_T += p * T
            E_est += p * est
            E_Test += p * T * est
        out[s] = (E_est - pi[s - 1], -(E_Test - E_T * E_est) / E_T)
    return out


def test_unweighted_identity_exact_on_tiny_updown():
    theta, grid = Theta(0.05, 9.0), IntensityGrid(0.2, 2)
    ref = hand_enumeration(theta, grid)
    for c in enumerate_bias_identity("UD", theta, grid, T=2, N=1):
        assert abs(c.lhs - c.rhs) < 1e-12
        assert c.lhs == pytest.approx(ref[c.level][0], abs=1e-15)
        assert c.rhs == pytest.approx(ref[c.level][1], abs=1e-15)
        assert abs(c.lhs) > 1e-3  # the design really is biased


@pytest.mark.parametrize("a,b,L,T,N", [(0.3, -2.0, 3, 3, 1), (-1.0, 4.0, 2, 3, 2), (0.0, 1.0, 3, 2, 2)])
def test_unweighted_identity_exact_other_designs(a, b, L, T, N):
    for c in enumerate_bias_identity("UD", Theta(a, b), IntensityGrid(1.0, L), T=T, N=N):
        assert abs(c.lhs - c.rhs) < 1e-12


def test_fixed_design_exactly_unbiased():
    for c in enumerate_bias_identity("FD", Theta(0.05, 9.0), IntensityGrid(0.2, 2), T=2, N=2):
        assert abs(c.lhs) < 1e-14 and abs(c.rhs) < 1e-14


def test_weighted_identity_exact_on_tiny_design():
    for c in enumerate_weighted_bias_identity(Theta(0.05, 9.0), 2.0, 0.5, IntensityGrid(0.2, 2), T=2, N=2):
        assert abs(c.lhs - c.rhs) < 1e-12
        assert abs(c.lhs) > 1e-4


def test_weighted_reduces_to_unweighted_when_all_in_class_a():
    lat = ScenarioConfig(scheme="FDr", effect_model="latent", tau=1.0, A=2.0, N=10, T=10, seed=3)
    fd = ScenarioConfig(scheme="FD", a=lat.a + lat.A, N=10, T=10, seed=3)
    for cw, cu in zip(weighted_bias_identity_check(lat, R=300), bias_identity_check(fd, R=300)):
        assert cw.lhs == pytest.approx(cu.lhs, abs=1e-15)
        assert cw.rhs == pytest.approx(cu.rhs, abs=1e-15)
        assert cw.mc_se == pytest.approx(cu.mc_se, abs=1e-15)


def test_fixed_design_mc_check_near_zero():
    for c in bias_identity_check(ScenarioConfig(scheme="FD", N=5, T=10, seed=1), R=1000):
        assert abs(c.lhs) < 4 * c.lhs_se
        assert c.agrees(4.0)


def test_updown_mc_check_small():
    cfg = ScenarioConfig(scheme="UD", N=5, T=10, seed=2)
    checks = bias_identity_check(cfg, R=1000)
    assert len(checks) == 10
    for c in checks:
        if c.mean_total > 1:
            assert c.agrees(4.0)
    single = bias_identity_check(cfg, level=3, R=1000)
    assert single.lhs == checks[2].lhs


def test_unsampled_level():
    # every design starts uniformly, so an unvisited level needs a direct call
    from adaptive_bias.bias import _identity_from_samples

    with pytest.raises(LevelUnsampledError):
        _identity_from_samples(3, np.zeros(5), np.full(5, 0.5), 0.5)


def test_scheme_preconditions():
    with pytest.raises(ValueError):
        bias_identity_check(ScenarioConfig(scheme="UDr"), R=10)
    with pytest.raises(ValueError):
        weighted_bias_identity_check(ScenarioConfig(scheme="FDr"), R=10)
