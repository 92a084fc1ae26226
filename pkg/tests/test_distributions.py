import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ecdss.distributions import (
    Deterministic,
    Exponential,
    Pareto,
    RngStream,
    harmonic,
    order_stat_moments_exp,
    order_stat_pdf,
    pareto_mean_matched,
    sample,
)


def draws(d, n, seed=7):
    rng = RngStream(seed, 0)
    return np.array([sample(d, rng) for _ in range(n)])


def test_deterministic_sample_is_constant():
    assert set(draws(Deterministic(1.0), 100).tolist()) == {1.0}


def test_exponential_sample_mean():
    x = draws(Exponential(2.0), 1_000_000)
    assert abs(x.mean() - 0.5) < 0.005


def test_pareto_empirical_cdf():
    x = draws(Pareto(1.5, 1.0), 1_000_000)
    assert abs((x <= 2.0).mean() - (1 - 0.5**1.5)) < 0.01
    assert x.min() >= 1.0


@pytest.mark.parametrize(
    "bad",
    [lambda: Exponential(0.0), lambda: Exponential(-1.0), lambda: Pareto(0.0, 1.0), lambda: Pareto(1.5, 0.0), lambda: Deterministic(-1.0)],
)
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_pareto_moment_predicates():
    assert not Pareto(1.0, 1.0).has_finite_mean and math.isinf(Pareto(1.0, 1.0).mean)
    assert Pareto(1.5, 1.0).has_finite_mean and not Pareto(1.5, 1.0).has_finite_variance
    assert Pareto(3.0, 1.0).has_finite_variance
    assert Pareto(3.0, 2.0).variance == pytest.approx(4 * 3 / (4 * 1))


@given(st.floats(1.01, 20.0), st.floats(1e-3, 1e3))
def test_mean_matching_preserves_mean(alpha, rate):
    assert pareto_mean_matched(alpha, rate).mean == pytest.approx(1 / rate, rel=1e-12)


def test_mean_matching_needs_finite_mean():
    with pytest.raises(ValueError):
        pareto_mean_matched(1.0, 1.0)


def test_stream_reproducible_and_distinct():
    a, b, c = RngStream(3, (0, 1, 2)), RngStream(3, (0, 1, 2)), RngStream(3, (0, 1, 3))
    xa = [a.standard_exponential() for _ in range(5000)]
    xb = [b.standard_exponential() for _ in range(5000)]
    xc = [c.standard_exponential() for _ in range(5000)]
    assert xa == xb
    assert xa != xc
    assert abs(np.corrcoef(xa, xc)[0, 1]) < 0.05


def test_choose_is_uniform_without_replacement():
    rng = RngStream(11, 0)
    counts = np.zeros(10)
    trials = 100_000
    for _ in range(trials):
        pick = rng.choose(10, 4)
        assert len(set(pick)) == 4
        counts[pick] += 1
    sigma = math.sqrt(trials * 0.4 * 0.6)
    assert np.all(np.abs(counts - 0.4 * trials) < 3 * sigma)


@pytest.mark.parametrize("args,expected", [((0, 1, 1), 1.0), ((5, 10, 1), 0.6456349206349206), ((5, 10, 2), 547129 / 6350400)])
def test_harmonic_values(args, expected):
    assert harmonic(*args) == pytest.approx(expected, rel=1e-14)


def test_harmonic_rejects_reversed_range():
    with pytest.raises(ValueError):
        harmonic(3, 2, 1)


@given(st.integers(1, 60), st.integers(1, 3), st.data())
def test_harmonic_strictly_decreasing_in_x(y, z, data):
    x = data.draw(st.integers(0, y - 1))
    assert harmonic(x, y, z) > harmonic(x + 1, y, z)


@pytest.mark.parametrize(
    "n,k,rate,mean,var",
    [(1, 1, 2.0, 0.5, 0.25), (3, 2, 1.0, 0.8333333333333334, 0.3611111111111111), (10, 5, 1.0, 0.6456349206349206, 547129 / 6350400)],
)
def test_order_stat_moments(n, k, rate, mean, var):
    m, v = order_stat_moments_exp(n, k, rate)
    assert m == pytest.approx(mean, rel=1e-12)
    assert v == pytest.approx(var, rel=1e-12)


def test_order_stat_pdf_single_variable():
    xs = np.linspace(0, 5, 11)
    assert np.allclose(order_stat_pdf(1, 1, Exponential(1.0), xs), np.exp(-xs))


def _quad(f, lo, hi):
    return integrate.quad(f, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-10)[0]


def _upper(n, k, base):
    # survival of the k-th order statistic is below 1e-12 well before this point
    return base.support()[0] + 60.0 / base.rate if isinstance(base, Exponential) else base.s_m * 1e6


@pytest.mark.parametrize("n,k", [(1, 1), (3, 2), (5, 5), (10, 1), (10, 5), (10, 10)])
def test_order_stat_pdf_normalization_and_moments(n, k):
    base = Exponential(1.0)
    hi = _upper(n, k, base)
    total = _quad(lambda x: order_stat_pdf(n, k, base, x), 0, hi)
    assert total == pytest.approx(1.0, abs=1e-6)
    m1 = _quad(lambda x: x * order_stat_pdf(n, k, base, x), 0, hi)
    m2 = _quad(lambda x: x * x * order_stat_pdf(n, k, base, x), 0, hi)
    mean, var = order_stat_moments_exp(n, k, 1.0)
    assert m1 == pytest.approx(mean, rel=1e-4)
    assert m2 - m1**2 == pytest.approx(var, rel=1e-4)


def test_order_stat_pdf_pareto_normalizes():
    base = Pareto(3.0, 1.0)
    total = _quad(lambda x: order_stat_pdf(4, 2, base, x), 1.0, 2.0) + _quad(lambda x: order_stat_pdf(4, 2, base, x), 2.0, 1e4)
    assert total == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=5, deadline=None)
@given(st.integers(1, 8), st.data())
def test_empirical_kth_smallest_matches_moments(n, data):
    k = data.draw(st.integers(1, n))
    rng = np.random.default_rng(n * 100 + k)
    trials = 100_000
    x = np.sort(rng.standard_exponential((trials, n)), axis=1)[:, k - 1]
    mean, var = order_stat_moments_exp(n, k, 1.0)
    assert abs(x.mean() - mean) < 3 * math.sqrt(var / trials)
