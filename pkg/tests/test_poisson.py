import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stochknap.poisson import (
    ShortfallKernel,
    make_rng,
    poisson_cdf,
    poisson_pmf_range,
    poisson_truncation,
    shortfall,
    shortfall_asymptotic_ratio,
)

from oracles import shortfall_sum


def test_cdf_small_example():
    assert poisson_cdf(5, 3.0) == pytest.approx(0.916082, abs=1e-6)


def test_shortfall_w5_mu5_matches_summation():
    ev = shortfall(5, 5.0)
    assert ev.value == pytest.approx(shortfall_sum(5, 5.0), abs=1e-12)
    assert ev.value == pytest.approx(0.877337, abs=1e-6)
    assert ev.derivative == pytest.approx(-stats.poisson.cdf(4, 5.0), abs=1e-12)


def test_shortfall_edges():
    assert shortfall(7, 0.0).value == 7.0
    assert shortfall(7, 0.0).derivative == -1.0
    assert shortfall(0, 3.0).value == 0.0
    assert shortfall(10, 500.0).value == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        shortfall(3, -1.0)


@pytest.mark.parametrize("mu", [0.0, 0.3, 4.0, 40.0, 250.0, 900.0])
def test_pmf_against_scipy(mu):
    k = np.arange(0, int(mu + 10 * math.sqrt(mu + 1) + 10))
    assert np.allclose(poisson_pmf_range(k[-1], mu), stats.poisson.pmf(k, mu), rtol=1e-9, atol=1e-300)


@settings(max_examples=200, deadline=None)
@given(W=st.integers(1, 150), mu=st.floats(0.0, 300.0))
def test_shortfall_properties(W, mu):
    ev = shortfall(W, mu)
    assert 0.0 <= ev.value <= W
    assert -1.0 <= ev.derivative <= 0.0
    assert ev.second_derivative >= 0.0
    assert ev.value >= W - mu - 1e-9            # Jensen: E[W - N]^+ >= W - E N


@settings(max_examples=100, deadline=None)
@given(W=st.integers(1, 80), mu=st.floats(0.0, 150.0), step=st.floats(0.01, 5.0))
def test_shortfall_decreasing_and_convex(W, mu, step):
    a, b, c = (shortfall(W, x).value for x in (mu, mu + step, mu + 2 * step))
    assert b <= a + 1e-12
    assert a - 2 * b + c >= -1e-10


def test_kernel_slope_matches_cdf():
    k = ShortfallKernel(9)
    for mu in (0.0, 2.0, 9.0, 30.0):
        assert k.neg_slope(mu) == pytest.approx(stats.poisson.cdf(8, mu), abs=1e-13)


def test_truncation_bound():
    for mu in (0.5, 12.0, 300.0):
        K = poisson_truncation(mu, 1e-12)
        assert stats.poisson.sf(K, mu) < 1e-12
        assert stats.poisson.sf(K - 1, mu) >= 1e-12 * 0.99


def test_asymptotic_ratio_tends_to_one():
    r = [shortfall_asymptotic_ratio(a) for a in (10, 100, 1000, 10000)]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(r, r[1:]))
    assert abs(r[-1] - 1) < 1e-3
    with pytest.raises(ValueError):
        shortfall_asymptotic_ratio(2.5)


def test_rng_is_keyed():
    a = make_rng(7, 3).random(5)
    assert np.array_equal(a, make_rng(7, 3).random(5))
    assert not np.array_equal(a, make_rng(7, 4).random(5))
