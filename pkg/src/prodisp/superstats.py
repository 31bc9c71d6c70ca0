"""Superstatistics: worker productivity under fluctuating aggregate demand.

The Boltzmann factor exp(-beta c) is replaced by its average over a density
f(beta) of inverse temperatures,

    B(c) = int_0^beta_max f(beta) exp(-beta c) d beta,   f(beta) ~ beta^(-gamma),

and workers are distributed as P^W(c) = P^F(c) B(c) / Z_B.  For large c,
B(c) ~ Gamma(1 - gamma) c^(gamma - 1), so a Pareto firm distribution with
index mu_F produces a worker distribution with index mu_F - gamma + 1.

The exponent gamma is tied to the exponent delta of the demand density
f_D(D) ~ (<c>_0 - D)^(-delta) near its ceiling; this yields the index
algebra in :func:`mu_worker_of` and :func:`delta_of`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import special

from ._quadrature import integrate_halfline, integrate_interval, segment_integrals
from .distributions import Pareto
from .equilibrium import GRID_POINTS, GRID_UPPER_TAIL, demand_gap

__all__ = [
    "InconsistentIndicesError",
    "PoorFitWarning",
    "SuperstatConfig",
    "DemandLaw",
    "DemandDensity",
    "SuperWorkerDistribution",
    "ScalingFit",
    "generalized_boltzmann",
    "bfactor_asymptotic",
    "worker_dist_super",
    "gamma_of_delta",
    "mu_worker_of",
    "mu_firm_of",
    "delta_of",
    "delta_stderr",
    "demand_density",
    "verify_small_beta_scaling",
]

# beta_max = BETA_MAX_FACTOR / <c>_0 unless given
BETA_MAX_FACTOR = 100.0
SCALING_R2_MIN = 0.999


class InconsistentIndicesError(ValueError):
    """mu_W <= mu_F would require delta >= 1."""


class PoorFitWarning(UserWarning):
    """The beta grid is not in the asymptotic small-beta regime."""


def gamma_of_delta(mu_f: float, delta: float) -> float:
    """Small-beta exponent gamma of f(beta) implied by the demand exponent delta."""
    if mu_f >= 2:
        return delta
    return 1.0 + (mu_f - 1.0) * (delta - 1.0)


@dataclass(frozen=True)
class DemandLaw:
    """f_D(D) proportional to (mean_ceiling - D)^(-delta) on [mean_ceiling - width, mean_ceiling).

    ``width`` defaults to the full attainable range (mean_ceiling minus the
    Pareto scale c0 = 1 implied by ``mean_ceiling`` and ``mu_f``).
    """

    delta: float
    mean_ceiling: float
    mu_f: float
    width: float | None = None

    def __post_init__(self):
        if not self.delta < 1:
            raise ValueError("delta must be < 1 for a normalizable demand density")
        if not self.mu_f > 1:
            raise ValueError("a finite mean ceiling requires mu_f > 1")
        if not (self.mean_ceiling > 0 and math.isfinite(self.mean_ceiling)):
            raise ValueError("mean_ceiling must be finite and positive")
        if self.width is not None and not 0 < self.width <= self.mean_ceiling:
            raise ValueError("width must lie in (0, mean_ceiling]")

    @classmethod
    def for_pareto(cls, dist: Pareto, delta: float, width: float | None = None) -> DemandLaw:
        return cls(delta, dist.mean(), dist.mu, width)

    @property
    def gamma(self) -> float:
        return gamma_of_delta(self.mu_f, self.delta)

    @property
    def interval(self) -> tuple[float, float]:
        w = self.width
        if w is None:
            c0 = self.mean_ceiling * (self.mu_f - 1.0) / self.mu_f
            w = self.mean_ceiling - c0
        return self.mean_ceiling - w, self.mean_ceiling


@dataclass(frozen=True)
class SuperstatConfig:
    """f(beta) = (1 - gamma) beta^(-gamma) / beta_max^(1 - gamma) on (0, beta_max]."""

    gamma: float
    beta_max: float
    firm_dist: Pareto

    def __post_init__(self):
        if not self.gamma < 1:
            raise ValueError("gamma must be < 1 for f(beta) to be integrable at 0")
        if not self.beta_max > 0:
            raise ValueError("beta_max must be positive")

    @classmethod
    def from_demand_law(
        cls, law: DemandLaw, c0: float | None = None, beta_max: float | None = None
    ) -> SuperstatConfig:
        if c0 is None:
            c0 = law.mean_ceiling * (law.mu_f - 1.0) / law.mu_f
        dist = Pareto(law.mu_f, c0)
        if beta_max is None:
            beta_max = BETA_MAX_FACTOR / dist.mean()
        return cls(law.gamma, beta_max, dist)

    @classmethod
    def default(cls, gamma: float, firm_dist: Pareto) -> SuperstatConfig:
        return cls(gamma, BETA_MAX_FACTOR / firm_dist.mean(), firm_dist)

    def beta_density(self, beta):
        beta = np.asarray(beta, dtype=float)
        g, bm = self.gamma, self.beta_max
        inside = (beta > 0) & (beta <= bm)
        with np.errstate(divide="ignore"):
            val = (1 - g) * beta ** (-g) / bm ** (1 - g)
        return np.where(inside, val, 0.0)


def generalized_boltzmann(cfg: SuperstatConfig, c: float) -> tuple[float, float]:
    """B(c) and its quadrature error estimate.

    With v = (beta/beta_max)^(1-gamma) the weight f(beta) d beta becomes dv,
    which removes the integrable singularity at beta = 0:
    B(c) = int_0^1 exp(-beta_max c v^(1/(1-gamma))) dv.
    """
    if c < 0:
        raise ValueError("productivity must be non-negative")
    if c == 0:
        return 1.0, 0.0
    g = cfg.gamma
    k = 1.0 / (1.0 - g)
    x = cfg.beta_max * c
    # the integrand falls to e^-1 at v = x^(-(1-gamma)); beyond that knee switch
    # to s = beta c, where the weight is (1-gamma) x^(gamma-1) s^(-gamma) e^(-s)
    v_knee = min(1.0, x ** (-(1.0 - g)))
    val, err = integrate_interval(lambda v: math.exp(-x * v**k), 0.0, v_knee)
    if x > 1.0:
        amp = (1.0 - g) * x ** (g - 1.0)
        s_hi = min(x, 800.0)
        v2, e2 = integrate_interval(lambda s: s**-g * math.exp(-s), 1.0, s_hi)
        val, err = val + amp * v2, err + amp * e2
    return val, err


def bfactor_asymptotic(gamma: float, c, beta_max: float = 1.0):
    """Large-c form Gamma(1 - gamma) c^(gamma - 1), normalized like :func:`generalized_boltzmann`.

    The prefactor (1 - gamma) beta_max^(gamma - 1) comes from f(beta) being a
    normalized density on (0, beta_max].
    """
    if not gamma < 1:
        raise ValueError("gamma must be < 1")
    c = np.asarray(c, dtype=float)
    amp = (1.0 - gamma) * beta_max ** (gamma - 1.0) * special.gamma(1.0 - gamma)
    return amp * c ** (gamma - 1.0)


def _bfactor_closed(cfg, c):
    # (1-g)(bm c)^(g-1) * lower incomplete gamma(1-g, bm c); used for vectorized tabulation
    g, bm = cfg.gamma, cfg.beta_max
    x = bm * np.asarray(c, dtype=float)
    return (1 - g) * x ** (g - 1) * special.gamma(1 - g) * special.gammainc(1 - g, x)


@dataclass(frozen=True, eq=False)
class SuperWorkerDistribution:
    """Tabulated P^W(c) and P^W_>(c) under the superstatistical weight."""

    config: SuperstatConfig
    partition_value: float
    grid: NDArray[np.float64] = field(repr=False)
    density: NDArray[np.float64] = field(repr=False)
    survival: NDArray[np.float64] = field(repr=False)

    @property
    def predicted_index(self) -> float:
        return self.config.firm_dist.mu - self.config.gamma + 1.0

    def ppf(self, q):
        """Inverse CDF by log-log interpolation of the tabulated survival function."""
        q = np.asarray(q, dtype=float)
        s = 1.0 - q
        logs = np.log(self.survival[::-1])
        logc = np.log(self.grid[::-1])
        return np.exp(np.interp(np.log(s), logs, logc))

    def sample(self, size: int, rng: np.random.Generator):
        smin = self.survival[-1]
        u = rng.random(size) * (1.0 - smin)
        return self.ppf(u)

    def quantile_grid(self, n: int):
        """Deterministic sample at survival levels i/(n+1), truncated to the tabulated range."""
        s = np.arange(1, n + 1) / (n + 1.0)
        s = s[s >= self.survival[-1]]
        return self.ppf(1.0 - s)


def worker_dist_super(cfg: SuperstatConfig) -> SuperWorkerDistribution:
    """P^W = P^F B / Z_B tabulated on a log grid from c0 to the 1 - 1e-6 quantile of P^W."""
    dist = cfg.firm_dist
    c0 = dist.c0

    def integrand(c):
        return math.exp(dist.logpdf1(c)) * generalized_boltzmann(cfg, c)[0]

    z_b, _ = integrate_halfline(integrand, c0, c0)
    mu_w = dist.mu - cfg.gamma + 1.0
    # survival ~ (c/c0)^-mu_w at worst; extend until it drops below the tail level
    stop = c0 * GRID_UPPER_TAIL ** (-1.0 / min(mu_w, dist.mu))
    grid = np.geomspace(c0, stop, GRID_POINTS)

    def dens(x):
        return dist.pdf(x) * _bfactor_closed(cfg, x) / z_b

    segs = segment_integrals(dens, grid)
    tail, _ = integrate_halfline(lambda x: integrand(x) / z_b, grid[-1], grid[-1])
    surv = np.empty_like(grid)
    surv[-1] = tail
    surv[:-1] = tail + np.cumsum(segs[::-1])[::-1]
    return SuperWorkerDistribution(cfg, z_b, grid, dens(grid), surv)


# --------------------------------------------------------------------------
# Pareto index algebra
# --------------------------------------------------------------------------


def mu_worker_of(mu_f: float, delta: float) -> float:
    """Worker-level index implied by firm index ``mu_f`` and demand exponent ``delta``."""
    if not mu_f > 1:
        raise ValueError("mu_f must exceed 1")
    if not delta < 1:
        raise ValueError("delta must be < 1")
    if mu_f > 2:
        return mu_f - delta + 1.0
    return (mu_f - 1.0) * (1.0 - delta) + mu_f


def mu_firm_of(mu_w: float, delta: float) -> float:
    """Inverse of :func:`mu_worker_of` in its first argument: one aggregation step up."""
    if not mu_w > 1:
        raise ValueError("mu_w must exceed 1")
    if not delta < 1:
        raise ValueError("delta must be < 1")
    # mu_worker_of(2, delta) = 3 - delta separates the branches
    if mu_w > 3.0 - delta:
        return mu_w + delta - 1.0
    return 1.0 + (mu_w - 1.0) / (2.0 - delta)


def delta_of(mu_f: float, mu_w: float) -> float:
    """Demand exponent delta recovered from measured firm and worker indices."""
    if not mu_f > 1:
        raise ValueError("mu_f must exceed 1")
    if not mu_w > mu_f:
        raise InconsistentIndicesError(
            f"mu_w={mu_w} <= mu_f={mu_f} would imply delta >= 1"
        )
    if mu_f > 2:
        return mu_f - mu_w + 1.0
    return (mu_f - mu_w) / (mu_f - 1.0) + 1.0


def delta_stderr(mu_f: float, mu_w: float, se_f: float, se_w: float) -> float:
    """First-order error propagation through :func:`delta_of` for independent estimates."""
    if mu_f > 2:
        return math.hypot(se_f, se_w)
    d_f = (mu_w - 1.0) / (mu_f - 1.0) ** 2
    d_w = -1.0 / (mu_f - 1.0)
    return math.hypot(d_f * se_f, d_w * se_w)


# --------------------------------------------------------------------------
# demand fluctuations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DemandDensity:
    """Normalized (ceiling - D)^(-delta) on [lower, ceiling) with an inverse-CDF sampler."""

    delta: float
    lower: float
    ceiling: float

    @property
    def width(self) -> float:
        return self.ceiling - self.lower

    def pdf(self, d):
        d = np.asarray(d, dtype=float)
        w = self.width
        inside = (d >= self.lower) & (d < self.ceiling)
        x = np.where(inside, (self.ceiling - d) / w, 1.0)
        return np.where(inside, (1.0 - self.delta) * x ** (-self.delta) / w, 0.0)

    def cdf(self, d):
        d = np.clip(np.asarray(d, dtype=float), self.lower, self.ceiling)
        x = (self.ceiling - d) / self.width
        return 1.0 - x ** (1.0 - self.delta)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return self.ceiling - self.width * (1.0 - u) ** (1.0 / (1.0 - self.delta))

    def sample(self, size: int, rng: np.random.Generator):
        return self.ppf(rng.random(size))

    def mean(self) -> float:
        return self.ceiling - self.width * (1.0 - self.delta) / (2.0 - self.delta)


def demand_density(law: DemandLaw) -> DemandDensity:
    lo, hi = law.interval
    return DemandDensity(law.delta, lo, hi)


# --------------------------------------------------------------------------
# small-beta scaling of the demand gap
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    expected_slope: float
    betas: tuple[float, ...] = field(repr=False)
    gaps: tuple[float, ...] = field(repr=False)

    @property
    def asymptotic(self) -> bool:
        return self.r_squared >= SCALING_R2_MIN


def verify_small_beta_scaling(firm_dist: Pareto, beta_grid) -> ScalingFit:
    """Fit log(<c>_0 - D(beta)) against log(beta).

    The expected slope is 1 for mu_F > 2 and mu_F - 1 for 1 < mu_F < 2.
    Warns with :class:`PoorFitWarning` when R^2 falls below 0.999.
    """
    mu = firm_dist.mu
    if not mu > 1:
        raise ValueError("need mu_F > 1 for a finite mean")
    if mu == 2:
        raise ValueError("mu_F = 2 carries logarithmic corrections; no pure power law")
    betas = np.asarray(beta_grid, dtype=float)
    if betas.size < 3 or np.any(betas <= 0):
        raise ValueError("need at least three positive beta values")
    gaps = np.array([demand_gap(firm_dist, b) for b in betas])
    x, y = np.log(betas), np.log(gaps)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    expected = 1.0 if mu > 2 else mu - 1.0
    fit = ScalingFit(float(slope), float(intercept), r2, expected, tuple(betas), tuple(gaps))
    if not fit.asymptotic:
        warnings.warn(
            f"R^2 = {r2:.6f} < {SCALING_R2_MIN}: beta grid is not in the small-beta regime",
            PoorFitWarning,
            stacklevel=2,
        )
    return fit
