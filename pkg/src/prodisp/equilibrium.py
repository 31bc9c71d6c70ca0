"""Maximum-entropy allocation of workers across firms under a demand constraint.

Given the productivity distribution across firms P^F(c) and the aggregate
demand per worker D, the most probable worker distribution is

    P^W(c) = P^F(c) exp(-beta c) / Z(beta),    Z(beta) = int P^F(c) exp(-beta c) dc,

with beta fixed by D = -d ln Z / d beta.  For discrete kinds the integral is
the sum over levels (Z(0) = K).

Integrals are evaluated with the Boltzmann factor shifted to the bottom of
the support, exp(-beta (c - c_min)), so that large beta does not underflow;
``log_partition`` adds the shift back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from numpy.typing import NDArray
from scipy import special

from ._quadrature import (
    QuadratureError,
    integrate_halfline,
    integrate_interval,
    segment_integrals,
)
from .distributions import (
    DivergentMomentError,
    FirmDistribution,
)

__all__ = [
    "DemandOutOfRangeError",
    "DivergentMomentError",
    "QuadratureError",
    "EquilibriumState",
    "UniformClosedForm",
    "log_partition",
    "partition_function",
    "moment",
    "demand_of_beta",
    "demand_variance",
    "demand_gap",
    "beta_of_demand",
    "worker_distribution",
    "uniform_closed_form",
]

GRID_POINTS = 2048
GRID_UPPER_TAIL = 1e-6
ROOT_RTOL = 1e-12


class DemandOutOfRangeError(ValueError):
    """Requested demand lies outside the attainable open interval."""

    def __init__(self, demand, lower, upper):
        super().__init__(
            f"demand {demand!r} outside attainable interval ({lower!r}, {upper!r})"
        )
        self.demand = demand
        self.lower = lower
        self.upper = upper


def _check_beta(dist: FirmDistribution, beta: float) -> None:
    if not beta >= 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be finite and non-negative, got {beta!r}")
    if beta == 0 and not dist.moment_is_finite(1):
        raise DivergentMomentError(
            "beta = 0 requires a finite unconditional mean productivity"
        )


def _shifted_integrand(dist, beta, n, c):
    y = c - dist.lower
    return y**n * math.exp(dist.logpdf1(c) - beta * y)


def _shifted_integrals(dist, beta, orders):
    """Integrals J_n = int (c - c_min)^n P^F(c) exp(-beta (c - c_min)) dc."""
    lo = dist.lower
    if dist.discrete:
        y = dist.levels - lo
        w = dist.weights * np.exp(-beta * y)
        return [float(np.sum(w * y**n)) for n in orders]
    kink = lo + 1.0 / beta if beta > 0 else None
    out = []
    for n in orders:
        value, _ = integrate_halfline(
            partial(_shifted_integrand, dist, beta, n), lo, dist.scale, kink=kink
        )
        out.append(value)
    return out


def log_partition(dist: FirmDistribution, beta: float) -> float:
    """ln Z(beta); finite even where Z itself underflows."""
    _check_beta_partition(dist, beta)
    (j0,) = _shifted_integrals(dist, beta, (0,))
    return math.log(j0) - beta * dist.lower


def _check_beta_partition(dist, beta):
    if not beta >= 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be finite and non-negative, got {beta!r}")


def partition_function(dist: FirmDistribution, beta: float) -> float:
    """Z(beta): sum of Boltzmann factors (discrete) or int P^F e^{-beta c} (continuous)."""
    return math.exp(log_partition(dist, beta))


def _central_stats(dist, beta, need_second):
    """Return (mean, variance or None) of c under P^F e^{-beta c}/Z."""
    if beta == 0:
        m1 = dist.raw_moment(1)
        var = None
        if need_second:
            var = dist.raw_moment(2) - m1 * m1
        return m1, var
    orders = (0, 1, 2) if need_second else (0, 1)
    js = _shifted_integrals(dist, beta, orders)
    m1y = js[1] / js[0]
    var = js[2] / js[0] - m1y * m1y if need_second else None
    return dist.lower + m1y, var


def moment(dist: FirmDistribution, beta: float, n: int) -> float:
    """n-th Boltzmann-weighted moment <c^n>_beta for n in {0, 1, 2}."""
    if n not in (0, 1, 2):
        raise ValueError("moment order must be 0, 1 or 2")
    _check_beta_partition(dist, beta)
    if n == 0:
        return 1.0
    if beta == 0:
        return dist.raw_moment(n)
    mean, var = _central_stats(dist, beta, n == 2)
    if n == 1:
        return mean
    return var + mean * mean


def demand_of_beta(dist: FirmDistribution, beta: float) -> float:
    """Aggregate demand D = <c>_beta = -d ln Z / d beta."""
    _check_beta(dist, beta)
    return _central_stats(dist, beta, False)[0]


def demand_variance(dist: FirmDistribution, beta: float) -> float:
    """<c^2>_beta - <c>_beta^2, equal to -dD/dbeta."""
    _check_beta(dist, beta)
    if beta == 0:
        dist._check_moment(2)
    return _central_stats(dist, beta, True)[1]


def _gap_integrand(dist, beta, mean, c):
    return (c - mean) * -math.expm1(-beta * c) * math.exp(dist.logpdf1(c))


def demand_gap(dist: FirmDistribution, beta: float) -> float:
    """<c>_0 - D(beta), evaluated without subtracting two nearly equal numbers.

    Uses int (c - <c>_0)(1 - e^{-beta c}) P^F(c) dc / Z(beta), which is exact
    because int (c - <c>_0) P^F dc vanishes.
    """
    _check_beta(dist, beta)
    dist._check_moment(1)
    mean = dist.raw_moment(1)
    if beta == 0:
        return 0.0
    if beta * dist.lower > 50.0:
        return mean - demand_of_beta(dist, beta)
    if dist.discrete:
        c = dist.levels
        w = dist.weights
        num = np.sum(w * (c - mean) * -np.expm1(-beta * c)) / np.sum(w)
        z = np.sum(w * np.exp(-beta * c)) / np.sum(w)
        return float(num / z)
    # split at the mean so each piece has a single sign
    lo = dist.lower
    f = partial(_gap_integrand, dist, beta, mean)
    below = 0.0
    if mean > lo:
        below, _ = integrate_interval(f, lo, mean)
    above, _ = integrate_halfline(f, max(mean, lo), dist.scale, kink=max(mean, lo) + 1.0 / beta)
    z = math.exp(log_partition(dist, beta))
    return (below + above) / z


def _demand_bounds(dist):
    upper = dist.raw_moment(1) if dist.moment_is_finite(1) else math.inf
    return dist.lower, upper


def beta_of_demand(dist: FirmDistribution, demand: float, *, rtol: float = ROOT_RTOL) -> float:
    """Invert D(beta) for the unique beta >= 0.

    Bracketed bisection in log(beta) to 1e-3 relative width, then Newton steps
    using dD/dbeta = -(<c^2> - <c>^2), kept inside the bracket.
    """
    lo, hi = _demand_bounds(dist)
    if not (lo < demand < hi):
        raise DemandOutOfRangeError(demand, lo, hi)

    def resid(b):
        return demand_of_beta(dist, b) - demand

    # D decreases in beta: resid > 0 at small beta, < 0 at large beta
    guess = 1.0 / (demand - lo)
    b_small, b_large = guess, guess
    while resid(b_small) <= 0:
        b_small /= 10.0
        if b_small < 1e-300:
            raise DemandOutOfRangeError(demand, lo, hi)
    while resid(b_large) >= 0:
        b_large *= 10.0
        if b_large > 1e300:
            raise DemandOutOfRangeError(demand, lo, hi)

    while b_large / b_small > 1.001:
        mid = math.sqrt(b_small * b_large)
        if resid(mid) > 0:
            b_small = mid
        else:
            b_large = mid

    beta = math.sqrt(b_small * b_large)
    for _ in range(50):
        mean, var = _central_stats(dist, beta, True)
        r = mean - demand
        if abs(r) <= rtol * abs(demand):
            break
        if r > 0:
            b_small = beta
        else:
            b_large = beta
        step = r / var if var > 0 else math.inf
        new = beta + step
        if not (b_small < new < b_large):
            new = math.sqrt(b_small * b_large)
        if abs(new - beta) <= 1e-15 * beta:
            beta = new
            break
        beta = new
    return beta


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """A solved macro-equilibrium.

    ``grid``/``density``/``survival`` tabulate P^W(c) and P^W_>(c); for
    discrete kinds the grid is the set of levels and ``density`` holds p_k.
    ``normalization`` is the tabulated total mass (1 up to quadrature error).
    """

    beta: float
    demand: float
    partition_value: float
    log_partition: float
    source: FirmDistribution
    grid: NDArray[np.float64] = field(repr=False)
    density: NDArray[np.float64] = field(repr=False)
    survival: NDArray[np.float64] = field(repr=False)
    normalization: float = 1.0

    @property
    def temperature(self) -> float:
        return math.inf if self.beta == 0 else 1.0 / self.beta

    def pdf(self, c):
        """Closed-form worker density P^F(c) e^{-beta c} / Z (continuous kinds)."""
        if self.source.discrete:
            raise TypeError("discrete equilibrium has probabilities, not a density")
        c = np.asarray(c, dtype=float)
        return np.exp(self.source.logpdf(c) - self.beta * c - self.log_partition)

    def probabilities(self):
        """p_k = e^{-beta c_k} / Z for discrete kinds."""
        if not self.source.discrete:
            raise TypeError("continuous equilibrium has a density, not probabilities")
        return self.density


def _continuous_grid(dist, beta):
    lo = dist.lower
    start = lo if lo > 0 else float(dist.ppf(1e-9))
    stop = float(dist.ppf(1.0 - GRID_UPPER_TAIL))
    if beta > 0:
        # P^W is at least as light-tailed as P^F; stop where e^{-beta c} is negligible
        stop = min(stop, max(lo + 60.0 / beta, start * 10.0))
    return np.geomspace(start, stop, GRID_POINTS)


def worker_distribution(dist: FirmDistribution, beta: float) -> EquilibriumState:
    """Solve the equilibrium worker distribution at inverse temperature ``beta``."""
    _check_beta(dist, beta)
    logz = log_partition(dist, beta)
    demand = demand_of_beta(dist, beta)
    lo = dist.lower

    if dist.discrete:
        c = dist.levels
        logw = np.log(dist.weights) - beta * (c - lo)
        p = np.exp(logw - special.logsumexp(logw))
        surv = np.cumsum(p[::-1])[::-1]
        return EquilibriumState(
            beta, demand, math.exp(logz), logz, dist, c, p, surv, float(p.sum())
        )

    grid = _continuous_grid(dist, beta)

    def dens(x):
        return np.exp(dist.logpdf(x) - beta * x - logz)

    segs = segment_integrals(dens, grid)
    tail, _ = integrate_halfline(
        lambda x: math.exp(dist.logpdf1(x) - beta * x - logz), grid[-1], grid[-1]
    )
    head = 0.0
    if grid[0] > lo:
        head, _ = integrate_interval(
            lambda x: math.exp(dist.logpdf1(x) - beta * x - logz) if x > 0 else 0.0,
            lo,
            grid[0],
        )
    surv = np.empty_like(grid)
    surv[-1] = tail
    surv[:-1] = tail + np.cumsum(segs[::-1])[::-1]
    total = head + surv[0]
    return EquilibriumState(
        beta, demand, math.exp(logz), logz, dist, grid, dens(grid), surv, total
    )


@dataclass(frozen=True)
class UniformClosedForm:
    """Approximate and exact partition/demand for the uniform productivity grid."""

    partition_approx: float
    demand_approx: float
    partition_exact: float
    demand_exact: float
    step_small: bool
    support_wide: bool

    @property
    def valid(self) -> bool:
        return self.step_small and self.support_wide

    @property
    def partition_relerr(self) -> float:
        return abs(self.partition_approx - self.partition_exact) / self.partition_exact

    @property
    def demand_relerr(self) -> float:
        return abs(self.demand_approx - self.demand_exact) / self.demand_exact


# thresholds for "beta*dc << 1" and "beta*K*dc >> 1"
SMALL_STEP = 0.1
WIDE_SUPPORT = 10.0


def uniform_exact(delta_c: float, count: int, beta: float) -> tuple[float, float]:
    """Exact geometric sums for levels k*delta_c, k = 1..count."""
    x = beta * delta_c
    if x == 0:
        return float(count), delta_c * (count + 1) / 2
    one_minus_q = -math.expm1(-x)
    one_minus_qk = -math.expm1(-x * count)
    z = math.exp(-x) * one_minus_qk / one_minus_q
    # D = dc * [1/(1-q) - K q^K / (1-q^K)]
    d = delta_c * (1.0 / one_minus_q - count * math.exp(-x * count) / one_minus_qk)
    return z, d


def uniform_closed_form(delta_c: float, count: int, beta: float) -> UniformClosedForm:
    """Z ~ 1/(beta dc) and D ~ 1/beta, with a validity report against the exact sums."""
    if not (delta_c > 0 and beta > 0 and count >= 1):
        raise ValueError("need delta_c > 0, beta > 0, count >= 1")
    z_exact, d_exact = uniform_exact(delta_c, count, beta)
    return UniformClosedForm(
        partition_approx=1.0 / (beta * delta_c),
        demand_approx=1.0 / beta,
        partition_exact=z_exact,
        demand_exact=d_exact,
        step_small=beta * delta_c < SMALL_STEP,
        support_wide=beta * count * delta_c > WIDE_SUPPORT,
    )
