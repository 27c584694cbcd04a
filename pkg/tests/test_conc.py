import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from linbandit.conc import Thresholds, empirical_violation_rate, f_delta
from linbandit.errors import ConfigError
from linbandit.instances import counterexample, finite_armed


def test_formula_value():
    expect = 2 * (1 + 1 / math.log(100)) * math.log(100) + 2 * math.log(2 * math.log(100))
    assert f_delta(100, 0.01, 2, 1.0) == pytest.approx(expect, rel=1e-14)
    assert f_delta(100, 0.01, 2, 1.0) == pytest.approx(15.65, abs=0.01)


def test_vanishing_first_term():
    n, d = 1000, 3
    assert f_delta(n, 1 - 1e-12, d) == pytest.approx(d * math.log(d * math.log(n)), rel=1e-9)


def test_named_thresholds():
    th = Thresholds(10**4, 3, 0.5)
    assert th.f_n == f_delta(10**4, 1e-4, 3, 0.5)
    assert th.g_n == f_delta(10**4, 1 / math.log(10**4), 3, 0.5)


def test_asymptotic_ratio():
    th = Thresholds(10**9, 2, 1.0)
    assert 1.0 <= th.f_n / (2 * math.log(10**9)) <= 1.5


@given(st.integers(3, 10**9), st.integers(1, 10), st.floats(0.01, 5))
def test_monotonicity(n, d, c):
    lo = 1.0 / n
    deltas = [lo, (lo + 0.5) / 2, 0.5, 0.9]
    vals = [f_delta(n, x, d, c) for x in deltas]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert f_delta(n, 0.5, d + 1, c) > f_delta(n, 0.5, d, c)
    assert f_delta(n, 0.5, d, 2 * c) > f_delta(n, 0.5, d, c)
    assert min(vals) > 0


def test_domain_errors():
    for args in [(2, 0.5, 2), (100, 0.001, 2), (100, 1.0, 2), (100, 0.5, 0)]:
        with pytest.raises(ConfigError):
            f_delta(*args)
    with pytest.raises(ConfigError):
        f_delta(100, 0.5, 2, 0.0)


def test_noiseless_rate_zero():
    assert empirical_violation_rate(finite_armed([1, 0]), "spanner", 200, 0.1, 100, noiseless=True) == 0.0


def test_detector_fires_when_threshold_shrunk():
    rate = empirical_violation_rate(finite_armed([1, 0]), "spanner", 1000, 0.1, 200, seed=1, threshold_scale=0.01)
    assert rate >= 0.5


def test_rate_below_delta_other_schedules():
    inst = counterexample(1, 0.05)
    assert empirical_violation_rate(inst, "all", 300, 0.2, 300, seed=2) <= 0.2 + 3 * math.sqrt(0.16 / 300)
    assert empirical_violation_rate(inst, [0, 1, 1, 2], 300, 0.2, 300, seed=2) <= 0.2 + 3 * math.sqrt(0.16 / 300)


def test_bad_schedule():
    with pytest.raises(ConfigError):
        empirical_violation_rate(finite_armed([1, 0]), "zigzag", 100, 0.1, 10)
    with pytest.raises(ConfigError):
        empirical_violation_rate(finite_armed([1, 0]), [0, 5], 100, 0.1, 10)
