import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from vwsgibbs import dist
from vwsgibbs.dist import InverseGammaParams, LognormalParams


# ig_log_kernel and ig_mode


def test_ig_log_kernel_at_one():
    assert dist.ig_log_kernel(1.0, InverseGammaParams(2.0, 3.0)) == -3.0


def test_ig_log_kernel_reduces_to_minus_log():
    assert dist.ig_log_kernel(math.e, (0.0, 0.0)) == pytest.approx(-1.0, abs=1e-15)


def test_ig_log_kernel_arithmetic():
    expected = -11.0 * math.log(0.5) - 1.0 / 0.5
    assert dist.ig_log_kernel(0.5, InverseGammaParams(10.0, 1.0)) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(5.6246, abs=1e-4)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_ig_log_kernel_domain(x):
    with pytest.raises(ValueError):
        dist.ig_log_kernel(x, InverseGammaParams(1.0, 1.0))


@pytest.mark.parametrize("shape, rate, mode", [(10.0, 1.0, 1 / 11), (0.0, 5.0, 5.0), (24.5, 2.0, 2 / 25.5)])
def test_ig_mode(shape, rate, mode):
    assert dist.ig_mode((shape, rate)) == pytest.approx(mode, rel=1e-15)


def test_ig_mode_domain():
    with pytest.raises(ValueError):
        dist.ig_mode((1.0, 0.0))


def test_params_validation():
    with pytest.raises(ValueError):
        InverseGammaParams(0.0, 1.0)
    with pytest.raises(ValueError):
        LognormalParams(0.0, 0.0)


@given(shape=st.floats(0.1, 60), rate=st.floats(0.01, 50))
@settings(max_examples=50, deadline=None)
def test_ig_kernel_peaks_at_mode(shape, rate):
    mode = dist.ig_mode((shape, rate))
    grid = mode * np.exp(np.linspace(-3, 3, 20001))
    step = grid[1] / grid[0]
    k = int(np.argmax(dist.ig_log_kernel(grid, (shape, rate))))
    assert grid[k] / step <= mode <= grid[k] * step


# interval probabilities


@pytest.mark.parametrize("mu, tau", [(0.0, 1.0), (3.0, 0.2), (-5.0, 2.5)])
def test_total_mass(mu, tau):
    assert dist.ln_interval_prob(0.0, math.inf, LognormalParams(mu, tau)) == 1.0


@pytest.mark.parametrize("mu, tau", [(0.0, 1.0), (1.7, 0.4)])
def test_median_mass(mu, tau):
    assert dist.ln_interval_prob(0.0, math.exp(mu), LognormalParams(mu, tau)) == pytest.approx(0.5, rel=1e-14)


def test_interval_mass_against_normal_cdf():
    expected = stats.norm.cdf(math.log(2.0)) - stats.norm.cdf(0.0)
    got = dist.ln_interval_prob(1.0, 2.0, LognormalParams(0.0, 1.0))
    assert got == pytest.approx(expected, rel=1e-13)
    assert got == pytest.approx(0.2558914, abs=1e-7)


def test_interval_mass_far_tail_keeps_relative_accuracy():
    p = LognormalParams(0.0, 1.0)
    a, b = math.exp(20.0), math.exp(21.0)
    expected = stats.norm.sf(20.0) - stats.norm.sf(21.0)
    assert dist.ln_interval_prob(a, b, p) == pytest.approx(expected, rel=1e-10)
    lower = stats.norm.cdf(-21.0) - stats.norm.cdf(-22.0)
    assert dist.ln_interval_prob(math.exp(-22.0), math.exp(-21.0), p) == pytest.approx(lower, rel=1e-10)


def test_interval_mass_domain():
    p = LognormalParams(0.0, 1.0)
    with pytest.raises(ValueError):
        dist.ln_interval_prob(2.0, 1.0, p)
    with pytest.raises(ValueError):
        dist.ln_interval_prob(1.0, 1.0, p)


positive = st.floats(1e-3, 1e3)


@given(mu=st.floats(-3, 3), tau=st.floats(0.1, 3), xs=st.lists(positive, min_size=3, max_size=3, unique=True))
@settings(max_examples=200, deadline=None)
def test_interval_mass_additive(mu, tau, xs):
    a, b, c = sorted(xs)
    p = LognormalParams(mu, tau)
    whole = dist.ln_interval_prob(a, c, p)
    assert dist.ln_interval_prob(a, b, p) + dist.ln_interval_prob(b, c, p) == pytest.approx(whole, abs=1e-12)


@given(mu=st.floats(-50, 50), tau=st.floats(0.01, 20), a=st.floats(0, 1e300), width=st.floats(1e-300, 1e300))
@settings(max_examples=300, deadline=None)
def test_interval_mass_in_unit_interval(mu, tau, a, width):
    b = a + width
    if not a < b:
        return
    p = LognormalParams(mu, tau)
    for hi in (b, math.inf):
        v = dist.ln_interval_prob(a, hi, p)
        assert 0.0 <= v <= 1.0


# truncated lognormal sampling


def test_unrestricted_mean(rng_seed=1):
    rng = np.random.default_rng(rng_seed)
    x = dist.sample_trunc_lognormal(0.0, math.inf, LognormalParams(0.0, 0.5), rng, size=1_000_000)
    assert x.mean() == pytest.approx(math.exp(0.125), rel=0.01)


def test_truncated_mean_against_quadrature():
    rng = np.random.default_rng(2)
    p = LognormalParams(0.0, 1.0)
    x = dist.sample_trunc_lognormal(5.0, 6.0, p, rng, size=1_000_000)
    g = stats.lognorm(s=1.0).pdf
    num = integrate.quad(lambda v: v * g(v), 5, 6, epsrel=1e-12)[0]
    den = integrate.quad(g, 5, 6, epsrel=1e-12)[0]
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - num / den) < 3 * se
    assert np.all((x > 5.0) & (x <= 6.0))


@pytest.mark.parametrize("a, b, mu, tau", [(0.0, 0.3, 0.0, 1.0), (2.0, math.inf, 0.0, 0.5), (1e-6, 2e-6, 0.0, 1.0),
                                           (0.9, 1.1, 0.0, 2.0)])
def test_truncated_ks(a, b, mu, tau):
    rng = np.random.default_rng(3)
    p = LognormalParams(mu, tau)
    x = dist.sample_trunc_lognormal(a, b, p, rng, size=100_000)
    assert np.all((x > a) & (x <= b))
    base = stats.lognorm(s=tau, scale=math.exp(mu))
    fa, fb = base.cdf(a), base.cdf(b) if math.isfinite(b) else 1.0
    sfa = base.sf(a)
    sfb = base.sf(b) if math.isfinite(b) else 0.0

    def cdf(v):
        # use survival differences above the median for accuracy
        if a >= math.exp(mu):
            return (sfa - base.sf(v)) / (sfa - sfb)
        return (base.cdf(v) - fa) / (fb - fa)

    assert stats.kstest(x, cdf).pvalue > 0.01


@given(mu=st.floats(-5, 5), tau=st.floats(0.05, 3), lo=st.floats(-6, 6), w=st.floats(1e-6, 5))
@settings(max_examples=100, deadline=None)
def test_truncated_support(mu, tau, lo, w):
    a, b = math.exp(mu + tau * lo), math.exp(mu + tau * (lo + w))
    if not a < b:
        return
    rng = np.random.default_rng(0)
    x = dist.sample_trunc_lognormal(a, b, LognormalParams(mu, tau), rng, size=50)
    assert np.all((x > a) & (x <= b))


def test_degenerate_interval():
    p = LognormalParams(0.0, 0.1)
    with pytest.raises(dist.DegenerateIntervalError):
        dist.sample_trunc_lognormal(math.exp(50.0), math.exp(51.0), p, np.random.default_rng(0))


# standard blocks


def test_invgamma_reciprocal_mean():
    rng = np.random.default_rng(4)
    a, b = 3.0, 2.0
    y = 1.0 / dist.rinvgamma(rng, a, b, size=1_000_000)
    se = y.std() / math.sqrt(y.size)
    assert abs(y.mean() - a / b) < 3 * se


def test_chisq_mean():
    rng = np.random.default_rng(5)
    x = dist.rchisq(rng, 16, size=1_000_000)
    assert abs(x.mean() - 16) < 3 * x.std() / math.sqrt(x.size)


def test_gamma_rate_parameterization():
    rng = np.random.default_rng(6)
    x = dist.rgamma(rng, 2.0, 4.0, size=200_000)
    assert abs(x.mean() - 0.5) < 3 * x.std() / math.sqrt(x.size)


def test_mvnorm_covariance():
    rng = np.random.default_rng(7)
    X = np.column_stack([np.ones(40), rng.normal(8, 2, 40), rng.normal(0, 1, 40)])
    cov = 0.2 * np.linalg.inv(X.T @ X)
    chol = np.linalg.cholesky(cov)
    draws = np.array([dist.rmvnorm(rng, np.zeros(3), chol=chol) for _ in range(100_000)])
    emp = np.cov(draws, rowvar=False)
    assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05


def test_mvnorm_not_positive_definite():
    with pytest.raises(np.linalg.LinAlgError):
        dist.rmvnorm(np.random.default_rng(0), np.zeros(2), cov=[[1.0, 2.0], [2.0, 1.0]])


def test_invgamma_rejects_bad_parameters():
    with pytest.raises(ValueError):
        dist.rinvgamma(np.random.default_rng(0), 0.0, 1.0)
