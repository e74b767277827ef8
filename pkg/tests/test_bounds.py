import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from worldlens.bounds import (
    bernstein_L,
    bernstein_t_star,
    epsilon_threshold,
    f_derivative_lower,
    f_inverse,
    f_log_ratio,
    lambert_w_upper,
    crossover_bound,
    stochastic_crossover_bound,
    width2_delta_bound,
    width2_delta_zero_bound,
    width2_interior_bound,
    width2_zero_bound,
)


def test_f_at_half():
    assert f_log_ratio(0.5) == 1.0
    assert f_inverse(1.0, 0.01, 0.5) == pytest.approx(0.5, abs=1e-12)


def test_f_domain():
    for x in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            f_log_ratio(x)
    with pytest.raises(ValueError):
        f_inverse(1.0, 0.0, 0.5)


def test_f_inverse_clamps():
    assert f_inverse(-5.0, 0.1, 0.5) == 0.1
    assert f_inverse(50.0, 0.1, 0.5) == 0.5


@settings(max_examples=300)
@given(st.floats(1e-4, 0.5))
def test_f_roundtrip(x):
    assert f_inverse(f_log_ratio(x), 1e-5, 0.5) == pytest.approx(x, abs=1e-12)


@settings(max_examples=300)
@given(st.floats(1e-4, 0.49))
def test_f_is_increasing_and_derivative_bound(x):
    h = 1e-7
    slope = (f_log_ratio(x + h) - f_log_ratio(x)) / h
    assert slope > 0
    assert slope >= f_derivative_lower(x + h) * (1 - 1e-4)


def test_lambert_values():
    assert lambert_w_upper(math.e) == pytest.approx(1.0, abs=1e-10)
    assert lambert_w_upper(100.0) == pytest.approx(float(lambertw(100.0).real), abs=1e-10)
    assert lambert_w_upper(100.0) == pytest.approx(3.3856, abs=1e-4)
    with pytest.raises(ValueError):
        lambert_w_upper(-1.0)


def test_lambert_upper_bound_on_random_values():
    rng = np.random.default_rng(0)
    for v in np.exp(rng.uniform(-3, 30, 1000)):
        w = lambert_w_upper(float(v))
        assert w * math.exp(w) >= v
        assert w >= float(lambertw(v).real) - 1e-12


@pytest.mark.parametrize("n", [10, 100, 1000, 10**6])
def test_lambert_below_explicit_bound(n):
    assert lambert_w_upper(n) <= math.log(n) - math.log(math.log(n)) + 1


def test_stochastic_crossover_bound_example():
    L = math.log(1.6 / 0.6)
    assert bernstein_L(0.2) == pytest.approx(L)
    expected = math.sqrt(2 * 0.35 * 0.65 * L / 20) + 2 * L / 60 + 1 / 20
    assert stochastic_crossover_bound(0.35, 20, 0.2) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.23207, abs=1e-5)


def test_bernstein_L_refuses_half():
    with pytest.raises(ValueError):
        bernstein_L(0.5)
    assert bernstein_L(0.0) == pytest.approx(math.log(2))


def test_width2_thresholds():
    assert width2_interior_bound(200) == pytest.approx(2 * math.log(201) / 200)
    assert width2_interior_bound(200) == pytest.approx(0.0530, abs=1e-4)
    assert width2_delta_bound(200, 0.2) == pytest.approx(0.0797, abs=1e-4)
    assert width2_zero_bound(100) == pytest.approx((math.log(100) - math.log(math.log(100)) + 1) / 100)
    assert width2_delta_zero_bound(100, 0.0) <= width2_zero_bound(100)


def test_crossover_bound():
    assert crossover_bound(0.5, 40) == pytest.approx(math.sqrt(0.5 / 39))
    assert crossover_bound(0.5, 40) == pytest.approx(0.113, abs=1e-3)


def test_epsilon():
    assert epsilon_threshold(0.2) == pytest.approx(0.125)


@settings(max_examples=300)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e3))
def test_t_star_clears_the_exponent(var, L):
    t = bernstein_t_star(var, L)
    assert t * t / (2 * var + 2 * t / 3) > L * (1 - 1e-12)


def test_t_star_grid():
    for var in np.logspace(-4, 4, 40):
        for L in np.logspace(-3, 2, 40):
            t = bernstein_t_star(var, L)
            assert t * t / (2 * var + 2 * t / 3) > L
