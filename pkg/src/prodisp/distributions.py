"""Firm productivity distributions.

Productivities are in units of 10^6 yen/person throughout the package.

Two families are supported:

* discrete kinds (:class:`DiscreteLevels`, :class:`UniformGrid`,
  :class:`EmpiricalSample`) whose Boltzmann sums are evaluated directly;
* continuous kinds (:class:`Pareto`, :class:`Exponential`, :class:`GB2`)
  whose integrals go through :mod:`prodisp._quadrature`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

__all__ = [
    "DivergentMomentError",
    "FirmDistribution",
    "DiscreteLevels",
    "UniformGrid",
    "EmpiricalSample",
    "Pareto",
    "Exponential",
    "GB2",
    "GB2Params",
]


class DivergentMomentError(ValueError):
    """Raised when an unconditional moment of the firm distribution is infinite."""


class FirmDistribution:
    """Base class for the productivity density across firms."""

    kind: str = ""
    discrete: bool = False

    @property
    def lower(self) -> float:
        """Infimum of the support."""
        raise NotImplementedError

    def moment_is_finite(self, n: int) -> bool:
        return True

    def raw_moment(self, n: int) -> float:
        """Unconditional moment <c^n>_0 (no Boltzmann weighting)."""
        raise NotImplementedError

    def mean(self) -> float:
        return self.raw_moment(1)

    def _check_moment(self, n: int) -> None:
        if not self.moment_is_finite(n):
            raise DivergentMomentError(
                f"moment of order {n} diverges for {self!r}"
            )


# --------------------------------------------------------------------------
# discrete kinds
# --------------------------------------------------------------------------


class _Discrete(FirmDistribution):
    discrete = True

    @property
    def levels(self) -> NDArray[np.float64]:
        raise NotImplementedError

    @property
    def weights(self) -> NDArray[np.float64]:
        """Multiplicity of each level in the partition sum."""
        raise NotImplementedError

    @property
    def lower(self) -> float:
        return float(self.levels[0])

    def raw_moment(self, n: int) -> float:
        c = self.levels
        w = self.weights
        return float(np.sum(w * c**n) / np.sum(w))


@dataclass(frozen=True)
class DiscreteLevels(_Discrete):
    """K firms with strictly increasing productivities c_1 < ... < c_K."""

    values: tuple[float, ...]
    kind = "discrete-levels"

    def __post_init__(self):
        c = np.asarray(self.values, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("need at least one productivity level")
        if np.any(c <= 0):
            raise ValueError("productivity levels must be strictly positive")
        if np.any(np.diff(c) <= 0):
            raise ValueError("productivity levels must be strictly increasing")
        object.__setattr__(self, "values", tuple(float(x) for x in c))

    @property
    def levels(self):
        return np.asarray(self.values)

    @property
    def weights(self):
        return np.ones(len(self.values))


@dataclass(frozen=True)
class UniformGrid(_Discrete):
    """Levels c_k = k * delta_c for k = 1..count."""

    delta_c: float
    count: int
    kind = "uniform-grid"

    def __post_init__(self):
        if not self.delta_c > 0:
            raise ValueError("delta_c must be positive")
        if self.count < 1:
            raise ValueError("count must be at least 1")

    @property
    def levels(self):
        return self.delta_c * np.arange(1, self.count + 1, dtype=float)

    @property
    def weights(self):
        return np.ones(self.count)

    def raw_moment(self, n: int) -> float:
        K = self.count
        if n == 0:
            return 1.0
        if n == 1:
            return self.delta_c * (K + 1) / 2
        if n == 2:
            return self.delta_c**2 * (K + 1) * (2 * K + 1) / 6
        return super().raw_moment(n)


@dataclass(frozen=True, eq=False)
class EmpiricalSample(_Discrete):
    """Equal-weight sample of observed firm productivities."""

    values: NDArray[np.float64] = field(repr=False)
    kind = "empirical-sample"

    def __post_init__(self):
        c = np.sort(np.asarray(self.values, dtype=float).ravel())
        if c.size == 0:
            raise ValueError("empty sample")
        if np.any(c <= 0) or not np.all(np.isfinite(c)):
            raise ValueError("sample values must be finite and positive")
        c.setflags(write=False)
        object.__setattr__(self, "values", c)

    @property
    def levels(self):
        return self.values

    @property
    def weights(self):
        return np.full(self.values.size, 1.0 / self.values.size)

    def __repr__(self):
        return f"EmpiricalSample(n={self.values.size})"


# --------------------------------------------------------------------------
# continuous kinds
# --------------------------------------------------------------------------


class _Continuous(FirmDistribution):
    discrete = False

    @property
    def scale(self) -> float:
        """Natural length scale used by the quadrature substitution."""
        raise NotImplementedError

    def logpdf(self, c: ArrayLike) -> NDArray[np.float64]:
        raise NotImplementedError

    def logpdf1(self, c: float) -> float:
        """Scalar log-density; the quadrature hot path."""
        return float(self.logpdf(c))

    def pdf(self, c: ArrayLike) -> NDArray[np.float64]:
        return np.exp(self.logpdf(c))

    def sf(self, c: ArrayLike) -> NDArray[np.float64]:
        raise NotImplementedError

    def ppf(self, q: ArrayLike) -> NDArray[np.float64]:
        raise NotImplementedError

    def rvs(self, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
        return self.ppf(rng.random(size))


@dataclass(frozen=True)
class Pareto(_Continuous):
    """P_>(c) = (c/c0)^(-mu) on [c0, inf)."""

    mu: float
    c0: float = 1.0
    kind = "pareto"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("Pareto index must be positive")
        if not self.c0 > 0:
            raise ValueError("Pareto scale must be positive")

    @property
    def lower(self):
        return self.c0

    @property
    def scale(self):
        return self.c0

    def logpdf1(self, c: float) -> float:
        return math.log(self.mu) + self.mu * math.log(self.c0) - (self.mu + 1) * math.log(c)

    def logpdf(self, c):
        c = np.asarray(c, dtype=float)
        with np.errstate(divide="ignore"):
            out = math.log(self.mu) + self.mu * math.log(self.c0) - (self.mu + 1) * np.log(c)
        return np.where(c >= self.c0, out, -np.inf)

    def sf(self, c):
        c = np.asarray(c, dtype=float)
        return np.where(c >= self.c0, (np.maximum(c, self.c0) / self.c0) ** -self.mu, 1.0)

    def ppf(self, q):
        return self.c0 * (1.0 - np.asarray(q, dtype=float)) ** (-1.0 / self.mu)

    def moment_is_finite(self, n):
        return self.mu > n

    def raw_moment(self, n):
        self._check_moment(n)
        return self.mu * self.c0**n / (self.mu - n)


@dataclass(frozen=True)
class Exponential(_Continuous):
    """Density rate * exp(-rate * c) on [0, inf)."""

    rate: float
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    @property
    def lower(self):
        return 0.0

    @property
    def scale(self):
        return 1.0 / self.rate

    def logpdf1(self, c: float) -> float:
        return math.log(self.rate) - self.rate * c

    def logpdf(self, c):
        c = np.asarray(c, dtype=float)
        return np.where(c >= 0, math.log(self.rate) - self.rate * c, -np.inf)

    def sf(self, c):
        return np.exp(-self.rate * np.maximum(np.asarray(c, dtype=float), 0.0))

    def ppf(self, q):
        return -np.log1p(-np.asarray(q, dtype=float)) / self.rate

    def raw_moment(self, n):
        return math.factorial(n) / self.rate**n


@dataclass(frozen=True)
class GB2Params:
    """Generalized beta of the second kind.

    f(x) = a x^(ap-1) / (b^(ap) B(p,q) (1 + (x/b)^a)^(p+q)); the upper tail
    of the survival function decays like x^(-a q).
    """

    a: float
    b: float
    p: float
    q: float

    def __post_init__(self):
        for name in ("a", "b", "p", "q"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"GB2 parameter {name} must be finite and positive, got {v}")

    @property
    def tail_index(self) -> float:
        return self.a * self.q

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.a, self.b, self.p, self.q])


def gb2_logpdf(x, a, b, p, q):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = a * (np.log(x) - math.log(b))
        out = (
            math.log(a)
            + (a * p - 1) * np.log(x)
            - a * p * math.log(b)
            - special.betaln(p, q)
            - (p + q) * np.logaddexp(0.0, z)
        )
    return np.where(x > 0, out, -np.inf)


@dataclass(frozen=True)
class GB2(_Continuous):
    params: GB2Params
    kind = "gb2"

    @property
    def lower(self):
        return 0.0

    @property
    def scale(self):
        return self.params.b

    def logpdf1(self, c: float) -> float:
        a, b, p, q = self.params.a, self.params.b, self.params.p, self.params.q
        if c <= 0:
            return -math.inf
        z = a * (math.log(c) - math.log(b))
        softplus = z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))
        return (
            math.log(a) + (a * p - 1) * math.log(c) - a * p * math.log(b)
            - special.betaln(p, q) - (p + q) * softplus
        )

    def logpdf(self, c):
        a, b, p, q = self.params.as_array()
        return gb2_logpdf(c, a, b, p, q)

    def sf(self, c):
        a, b, p, q = self.params.as_array()
        c = np.maximum(np.asarray(c, dtype=float), 0.0)
        # 1 - z = 1 / (1 + (c/b)^a); regularized incomplete beta in the complement
        one_minus_z = special.expit(-a * (np.log(np.maximum(c, 1e-300)) - math.log(b)))
        return special.betainc(q, p, one_minus_z)

    def ppf(self, u):
        a, b, p, q = self.params.as_array()
        z = special.betaincinv(p, q, np.asarray(u, dtype=float))
        with np.errstate(divide="ignore"):
            return b * (z / (1.0 - z)) ** (1.0 / a)

    def rvs(self, size, rng):
        a, b, p, q = self.params.as_array()
        z = rng.beta(p, q, size)
        return b * (z / (1.0 - z)) ** (1.0 / a)

    def moment_is_finite(self, n):
        return self.params.a * self.params.q > n

    def raw_moment(self, n):
        self._check_moment(n)
        a, b, p, q = self.params.as_array()
        return b**n * math.exp(special.betaln(p + n / a, q - n / a) - special.betaln(p, q))
