"""Marginal versus average productivity under Cobb-Douglas technology.

With Y = A K^(1-alpha) L^alpha the marginal productivity of labor is
c_M = alpha * c. If alpha is independent of c and bounded away from zero,
c_M inherits the Pareto index of c; only the scale moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .fitting import DEFAULT_TAIL_FRACTION, ParetoFit, hill_estimator

__all__ = ["LaborShareLaw", "TailComparison", "marginal_from_average", "verify_tail_equality"]

# p-value below which the rank correlation between c and alpha flags dependence
INDEPENDENCE_PVALUE = 1e-3
# relative spread of c_M / c below which the share counts as constant
SHARE_RTOL = 1e-12


@dataclass(frozen=True)
class LaborShareLaw:
    """Distribution of the labor share alpha: uniform on (lo, hi) or a point mass."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind == "uniform-interval":
            if not 0 < self.lo < self.hi <= 1:
                raise ValueError("uniform labor share needs 0 < lo < hi <= 1")
        elif self.kind == "degenerate":
            if not 0 < self.value <= 1:
                raise ValueError("labor share must lie in (0, 1]")
        else:
            raise ValueError(f"unknown labor share kind {self.kind!r}")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> LaborShareLaw:
        return cls("uniform-interval", lo=lo, hi=hi)

    @classmethod
    def constant(cls, value: float) -> LaborShareLaw:
        return cls("degenerate", value=value)

    def sample(self, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
        if self.kind == "degenerate":
            return np.full(size, self.value)
        return rng.uniform(self.lo, self.hi, size)


def marginal_from_average(c_samples: ArrayLike, law: LaborShareLaw, seed: int) -> NDArray[np.float64]:
    """c_M = alpha * c with one independent alpha draw per firm."""
    c = np.asarray(c_samples, dtype=float)
    if np.any(c <= 0):
        raise ValueError("productivities must be positive")
    alpha = law.sample(c.size, np.random.default_rng(seed)).reshape(c.shape)
    return alpha * c


@dataclass(frozen=True)
class TailComparison:
    fit_c: ParetoFit
    fit_marginal: ParetoFit
    equal: bool
    share_rank_correlation: float | None
    independence_violated: bool | None

    @property
    def difference(self) -> float:
        return self.fit_marginal.mu_hat - self.fit_c.mu_hat

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.fit_c.stderr, self.fit_marginal.stderr)


def verify_tail_equality(
    c_samples: ArrayLike,
    cm_samples: ArrayLike,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    nsigma: float = 3.0,
) -> TailComparison:
    """Hill fits of c and c_M and whether they agree within ``nsigma`` combined errors.

    When both samples are paired (same length), the implied shares c_M/c are
    rank-correlated with c; a significant correlation means the independence
    hypothesis behind the equality does not hold and is flagged.
    """
    c = np.asarray(c_samples, dtype=float).ravel()
    cm = np.asarray(cm_samples, dtype=float).ravel()
    fc = hill_estimator(c, tail_fraction)
    fm = hill_estimator(cm, tail_fraction)
    equal = fc.agrees_with(fm, nsigma)
    rho = violated = None
    if c.size == cm.size:
        share = cm / c
        # a constant share still shows rounding noise in cm / c; ignore spreads at that level
        if np.ptp(share) > SHARE_RTOL * float(np.max(np.abs(share))):
            res = stats.spearmanr(c, share)
            rho = float(res.statistic)
            violated = bool(res.pvalue < INDEPENDENCE_PVALUE)
        else:
            rho, violated = 0.0, False
    return TailComparison(fc, fm, equal, rho, violated)
