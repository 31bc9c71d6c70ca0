import numpy as np
import pytest

from prodisp.distributions import Pareto
from prodisp.margsim import (
    LaborShareLaw,
    marginal_from_average,
    verify_tail_equality,
)


def test_law_validation():
    with pytest.raises(ValueError):
        LaborShareLaw.uniform(0.0, 1.0)
    with pytest.raises(ValueError):
        LaborShareLaw.uniform(0.8, 0.5)
    with pytest.raises(ValueError):
        LaborShareLaw.constant(1.5)
    with pytest.raises(ValueError):
        LaborShareLaw("beta")


def test_marginal_is_scaled_average():
    c = Pareto(1.5).rvs(1000, np.random.default_rng(0))
    cm = marginal_from_average(c, LaborShareLaw.uniform(0.5, 1.0), seed=3)
    ratio = cm / c
    assert ratio.min() >= 0.5 and ratio.max() <= 1.0
    assert np.array_equal(cm, marginal_from_average(c, LaborShareLaw.uniform(0.5, 1.0), seed=3))


def test_marginal_rejects_nonpositive():
    with pytest.raises(ValueError):
        marginal_from_average([1.0, -1.0], LaborShareLaw.constant(0.5), 0)


def test_unit_share_is_identity():
    c = Pareto(1.5).rvs(1000, np.random.default_rng(0))
    assert np.array_equal(marginal_from_average(c, LaborShareLaw.constant(1.0), 0), c)


def test_degenerate_share_exact_equality():
    c = Pareto(1.5).rvs(100_000, np.random.default_rng(1))
    cm = marginal_from_average(c, LaborShareLaw.constant(0.7), 0)
    res = verify_tail_equality(c, cm)
    # scaling by 0.7 is not exact in floating point; the indices agree to rounding
    assert abs(res.difference) <= 8 * np.finfo(float).eps * res.fit_c.mu_hat
    assert res.share_rank_correlation == 0.0
    assert res.equal
    assert res.independence_violated is False


def test_uniform_share_tail_equal_within_bands():
    hits = 0
    for s in range(10):
        c = Pareto(1.5).rvs(100_000, np.random.default_rng(100 + s))
        cm = marginal_from_average(c, LaborShareLaw.uniform(0.5, 1.0), s)
        res = verify_tail_equality(c, cm)
        hits += res.equal
        assert res.fit_marginal.c0_hat < res.fit_c.c0_hat
    assert hits >= 9


def test_dependent_share_is_flagged():
    c = Pareto(1.5).rvs(100_000, np.random.default_rng(2))
    q = np.quantile(c, 0.99)
    cm = c * np.minimum(1.0, c / q)
    res = verify_tail_equality(c, cm)
    assert res.independence_violated
    assert res.share_rank_correlation > 0.5


def test_independent_share_not_flagged():
    c = Pareto(1.5).rvs(100_000, np.random.default_rng(3))
    cm = marginal_from_average(c, LaborShareLaw.uniform(0.5, 1.0), 4)
    res = verify_tail_equality(c, cm)
    assert not res.independence_violated
    assert abs(res.share_rank_correlation) < 0.02


def test_unpaired_samples_skip_dependence_check():
    c = Pareto(1.5).rvs(10_000, np.random.default_rng(3))
    res = verify_tail_equality(c, c[:5000])
    assert res.share_rank_correlation is None
    assert res.independence_violated is None


def test_power_of_two_share_bit_exact():
    c = Pareto(1.5).rvs(100_000, np.random.default_rng(1))
    cm = marginal_from_average(c, LaborShareLaw.constant(0.5), 0)
    assert verify_tail_equality(c, cm).difference == 0.0
