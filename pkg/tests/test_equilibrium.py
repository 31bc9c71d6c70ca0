import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prodisp.distributions import (
    GB2,
    DiscreteLevels,
    DivergentMomentError,
    EmpiricalSample,
    Exponential,
    GB2Params,
    Pareto,
    UniformGrid,
)
from prodisp.equilibrium import (
    DemandOutOfRangeError,
    beta_of_demand,
    demand_gap,
    demand_of_beta,
    demand_variance,
    log_partition,
    moment,
    partition_function,
    uniform_closed_form,
    uniform_exact,
    worker_distribution,
)


def pareto_oracle(mu, c0, beta):
    """(Z, D) for a Pareto law from mpmath incomplete gamma functions."""
    mu, c0, beta = mpmath.mpf(mu), mpmath.mpf(c0), mpmath.mpf(beta)
    x = beta * c0
    z = mu * x**mu * mpmath.gammainc(-mu, x)
    first = mu * c0**mu * beta ** (mu - 1) * mpmath.gammainc(1 - mu, x)
    return float(z), float(first / z)


# --- partition function -----------------------------------------------------


def test_partition_discrete_counts_levels():
    d = DiscreteLevels(tuple(float(k) for k in range(1, 34)))
    assert partition_function(d, 0.0) == pytest.approx(33.0, rel=1e-15)


def test_partition_normalized_continuous_at_zero():
    assert partition_function(Pareto(1.5), 0.0) == pytest.approx(1.0, rel=1e-10)
    assert partition_function(Exponential(3.0), 0.0) == pytest.approx(1.0, rel=1e-12)


def test_partition_exponential_closed_form():
    assert partition_function(Exponential(1.0), 0.5) == pytest.approx(2 / 3, rel=1e-12)


@pytest.mark.parametrize("mu", [1.5, 2.5, 3.0])
@pytest.mark.parametrize("beta", [1e-6, 0.01, 1.0, 30.0])
def test_pareto_partition_and_demand_match_mpmath(mu, beta):
    z, d = pareto_oracle(mu, 2.0, beta)
    p = Pareto(mu, 2.0)
    assert partition_function(p, beta) == pytest.approx(z, rel=1e-10)
    assert demand_of_beta(p, beta) == pytest.approx(d, rel=1e-10)


def test_log_partition_survives_underflow():
    p = Pareto(2.0, 1.0)
    lz = log_partition(p, 2000.0)
    assert math.isfinite(lz)
    assert lz == pytest.approx(-2000.0 + math.log(2.0 / 2002.0), rel=1e-6)


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        partition_function(Exponential(1.0), -0.1)


# --- moments ------------------------------------------------------------------


def test_moment_order_zero_is_one():
    assert moment(Pareto(1.2), 0.3, 0) == 1.0


def test_moment_exponential_mean():
    assert moment(Exponential(1.0), 0.0, 1) == pytest.approx(1.0)
    assert moment(Exponential(1.0), 1.0, 2) == pytest.approx(2 * 0.25, rel=1e-10)


def test_divergent_second_moment():
    with pytest.raises(DivergentMomentError):
        moment(Pareto(1.5), 0.0, 2)
    with pytest.raises(DivergentMomentError):
        demand_of_beta(Pareto(0.8), 0.0)


# --- demand and its inverse ---------------------------------------------------


def test_uniform_grid_demand_fig1():
    g = UniformGrid(0.01, 100_000)
    assert demand_of_beta(g, 0.05) == pytest.approx(20.0, rel=0.01)
    assert beta_of_demand(g, 100.0) == pytest.approx(0.01, rel=0.01)


def test_single_level_demand():
    assert demand_of_beta(DiscreteLevels((3.5,)), 7.0) == 3.5


def test_exponential_demand_and_inverse():
    e = Exponential(1.0)
    assert demand_of_beta(e, 1.0) == pytest.approx(0.5, rel=1e-12)
    assert beta_of_demand(e, 0.5) == pytest.approx(1.0, rel=1e-10)


def test_out_of_range_demand():
    with pytest.raises(DemandOutOfRangeError) as info:
        beta_of_demand(Pareto(1.5), 3.0)
    assert info.value.upper == pytest.approx(3.0)
    with pytest.raises(DemandOutOfRangeError):
        beta_of_demand(Pareto(1.5), 1.0)


@pytest.mark.parametrize(
    "dist",
    [Pareto(1.5), Pareto(3.0, 0.5), Exponential(2.0), UniformGrid(0.1, 500),
     GB2(GB2Params(2.0, 50.0, 1.2, 0.75))],
    ids=lambda d: d.kind,
)
def test_roundtrip(dist):
    lo, hi = dist.lower, dist.mean()
    for frac in (0.05, 0.5, 0.95):
        d = lo + frac * (hi - lo)
        b = beta_of_demand(dist, d)
        assert demand_of_beta(dist, b) == pytest.approx(d, rel=1e-10)


def test_derivative_identity_central_difference():
    for dist, beta in [(Pareto(3.0), 0.2), (Pareto(1.5), 0.05), (Exponential(1.0), 2.0)]:
        h = 1e-4 * beta
        fd = -(log_partition(dist, beta + h) - log_partition(dist, beta - h)) / (2 * h)
        assert demand_of_beta(dist, beta) == pytest.approx(fd, rel=1e-5)


def test_demand_gap_small_beta_is_stable():
    p = Pareto(3.0)
    g = demand_gap(p, 1e-7)
    assert g > 0
    # first-order expansion: gap ~ beta * Var_0 for mu > 2
    var0 = p.raw_moment(2) - p.raw_moment(1) ** 2
    assert g / 1e-7 == pytest.approx(var0, rel=1e-3)


# --- worker distribution -----------------------------------------------------


def test_worker_distribution_beta_zero_is_firm_distribution():
    p = Pareto(1.5)
    st_ = worker_distribution(p, 0.0) if p.moment_is_finite(1) else None
    c = np.array([1.0, 2.0, 10.0])
    assert np.allclose(st_.pdf(c), p.pdf(c), rtol=1e-10)


def test_discrete_two_level_probabilities():
    st_ = worker_distribution(DiscreteLevels((1.0, 2.0)), math.log(2.0))
    assert np.allclose(st_.probabilities(), [2 / 3, 1 / 3], rtol=1e-14)


@pytest.mark.parametrize("beta", [0.01, 0.1, 1.0])
def test_pareto_worker_tables_normalized_and_consistent(beta):
    p = Pareto(1.5)
    st_ = worker_distribution(p, beta)
    assert st_.normalization == pytest.approx(1.0, abs=1e-6)
    # first moment of the table equals the demand
    from prodisp._quadrature import segment_integrals
    mean = segment_integrals(lambda x: x * st_.pdf(x), st_.grid).sum()
    tail = st_.grid[-1] * st_.survival[-1]
    assert (mean + tail) == pytest.approx(st_.demand, rel=1e-5)
    # exponential suppression of the worker tail relative to firms
    c = st_.grid[-1] / 2
    i = np.searchsorted(st_.grid, c)
    assert st_.survival[i] < float(p.sf(st_.grid[i])) * math.exp(-beta * st_.grid[i] / 2)


def test_worker_distribution_kinds_normalize():
    for dist, beta in [(Exponential(1.0), 0.5), (GB2(GB2Params(2, 50, 1.2, 0.75)), 0.01),
                       (UniformGrid(0.01, 100_000), 0.05)]:
        st_ = worker_distribution(dist, beta)
        assert st_.normalization == pytest.approx(1.0, abs=1e-6)


def test_exponential_worker_density_closed_form():
    st_ = worker_distribution(Exponential(1.0), 1.0)
    c = np.array([0.1, 1.0, 5.0])
    assert np.allclose(st_.pdf(c), 2.0 * np.exp(-2.0 * c), rtol=1e-12)


# --- uniform closed form -----------------------------------------------------


def test_uniform_exact_matches_direct_sum():
    dc, K, beta = 0.01, 100_000, 0.05
    c = dc * np.arange(1, K + 1)
    w = np.exp(-beta * c)
    z, d = uniform_exact(dc, K, beta)
    assert z == pytest.approx(w.sum(), rel=1e-12)
    assert d == pytest.approx((c * w).sum() / w.sum(), rel=1e-12)


def test_uniform_closed_form_fig1():
    cf = uniform_closed_form(0.01, 100_000, 0.05)
    assert cf.demand_approx == pytest.approx(20.0)
    assert cf.valid
    assert cf.demand_relerr < 0.01


def test_uniform_closed_form_flags_coarse_step():
    cf = uniform_closed_form(1.0, 2, 10.0)
    assert cf.support_wide
    assert not cf.step_small
    assert not cf.valid


def test_uniform_closed_form_fine_grid():
    cf = uniform_closed_form(0.001, 1_000_000, 0.1)
    assert cf.demand_approx == 10.0
    assert cf.demand_exact == pytest.approx(10.0, rel=1e-3)


def test_discrete_grid_matches_continuum_within_step():
    dc, K, beta = 0.05, 4000, 0.3
    g = UniformGrid(dc, K)
    L = dc * K
    # continuous uniform density on (0, L]: Z = (1 - e^{-beta L}) / (beta L), D = 1/beta - L/(e^{beta L} - 1)
    d_cont = 1 / beta - L / math.expm1(beta * L)
    assert abs(demand_of_beta(g, beta) - d_cont) < dc
    z_grid = partition_function(g, beta) / K
    z_cont = -math.expm1(-beta * L) / (beta * L)
    assert abs(z_grid - z_cont) / z_cont < beta * dc


# --- properties ------------------------------------------------------------------


levels = st.lists(st.floats(0.1, 100.0), min_size=2, max_size=30, unique=True).map(sorted)


@settings(max_examples=60, deadline=None)
@given(levels, st.floats(1e-3, 10.0), st.floats(1.01, 5.0))
def test_demand_decreasing_in_beta(vals, beta, factor):
    d = DiscreteLevels(tuple(vals))
    if vals[-1] - vals[0] < 1e-6:
        return
    assert demand_of_beta(d, beta) >= demand_of_beta(d, beta * factor)


@settings(max_examples=60, deadline=None)
@given(levels, st.floats(0.02, 0.98))
def test_discrete_roundtrip(vals, frac):
    d = DiscreteLevels(tuple(vals))
    if vals[-1] / vals[0] - 1 < 1e-3:
        return
    target = vals[0] + frac * (d.mean() - vals[0])
    b = beta_of_demand(d, target)
    assert b >= 0
    assert demand_of_beta(d, b) == pytest.approx(target, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.05, 4.0), st.floats(1e-3, 20.0))
def test_variance_identity_pareto(mu, beta):
    p = Pareto(mu)
    h = 1e-4 * beta
    fd = (demand_of_beta(p, beta + h) - demand_of_beta(p, beta - h)) / (2 * h)
    assert -fd == pytest.approx(demand_variance(p, beta), rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 50.0), min_size=5, max_size=200))
def test_empirical_sample_demand_bounds(vals):
    e = EmpiricalSample(np.array(vals))
    for beta in (0.01, 1.0, 100.0):
        d = demand_of_beta(e, beta)
        assert e.lower - 1e-12 <= d <= e.mean() + 1e-9
