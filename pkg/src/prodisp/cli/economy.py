"""Synthetic firm panels driven by fluctuating aggregate demand.

Each year draws firm productivities, then splits the year into ``periods``
sub-periods. Every sub-period draws an aggregate demand D from the power-law
demand density (stratified inverse-CDF draws), solves for its beta, and
spreads the year's labor by the Boltzmann weights exp(-beta c)/Z. The year's
employment is one multinomial draw from the period-averaged weights, so the
panel carries the superstatistical weighting rather than a single-beta one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..distributions import EmpiricalSample, Pareto
from ..equilibrium import beta_of_demand
from ..superstats import DemandDensity
from .panel import FirmRecord, Panel
from .scenario import Scenario, ScenarioError

__all__ = ["YearMeta", "EconomyResult", "generate_synthetic_economy"]


@dataclass(frozen=True)
class YearMeta:
    year: int
    mean_ceiling: float
    demand_lower: float
    beta_min: float
    beta_median: float
    beta_max: float
    firms_without_workers: int


@dataclass(frozen=True, eq=False)
class EconomyResult:
    panel: Panel
    years: tuple[YearMeta, ...]

    def summary(self) -> dict:
        return {
            "years": [m.__dict__ for m in self.years],
            "firms_without_workers": sum(m.firms_without_workers for m in self.years),
        }


def _sector_labels(c, n_sectors, rule, rng):
    if rule == "random":
        idx = rng.integers(0, n_sectors, c.size)
    else:
        ranks = np.empty(c.size, dtype=np.int64)
        ranks[np.argsort(c, kind="stable")] = np.arange(c.size)
        idx = ranks * n_sectors // c.size
    return [f"S{i + 1:02d}" for i in idx]


def _period_weights(c, betas):
    w = np.zeros(c.size)
    for b in betas:
        lw = -b * c
        w += np.exp(lw - logsumexp(lw))
    return w / len(betas)


def generate_synthetic_economy(scenario: Scenario) -> EconomyResult:
    scenario.require(["gen"])
    dist = scenario.firm_distribution
    if not isinstance(dist, Pareto) or not dist.mu > 1:
        raise ScenarioError("synthetic economy needs a pareto firm_distribution with mu > 1")
    eco, dem = scenario.economy, scenario.demand
    children = np.random.SeedSequence(scenario.seed).spawn(eco.years)
    years = {}
    meta = []
    for j, ss in enumerate(children):
        year = eco.first_year + j
        rng = np.random.default_rng(ss)
        c = dist.rvs(eco.firms, rng)
        sample = EmpiricalSample(c)
        # the finite sample's own mean is the attainable demand ceiling
        ceiling = float(np.mean(c))
        floor = float(c.min())
        width = ceiling - floor if dem.width is None else min(dem.width, ceiling - floor)
        if dem.fixed is not None:
            if not floor < dem.fixed < ceiling:
                raise ScenarioError(
                    f"fixed demand {dem.fixed} outside ({floor:.6g}, {ceiling:.6g}) in year {year}"
                )
            demands = np.full(1, dem.fixed)
        else:
            dd = DemandDensity(dem.delta, ceiling - width, ceiling)
            u = (np.arange(eco.periods) + rng.random(eco.periods)) / eco.periods
            demands = dd.ppf(u)
            # an exact ceiling draw (u rounding to 1) has beta = 0 and no finite root
            demands = np.minimum(demands, np.nextafter(ceiling, -np.inf))
            demands = np.maximum(demands, np.nextafter(floor, np.inf))
        betas = np.array([beta_of_demand(sample, d) for d in demands])
        weights = _period_weights(c, betas)
        L = rng.multinomial(eco.workers, weights)
        sectors = _sector_labels(c, eco.sectors, eco.sector_rule, rng)
        keep = np.flatnonzero(L > 0)
        years[year] = tuple(
            FirmRecord(f"F{i:05d}", year, float(c[i] * L[i]), int(L[i]), sectors[i]) for i in keep
        )
        meta.append(YearMeta(
            year, ceiling, ceiling - width, float(betas.min()), float(np.median(betas)),
            float(betas.max()), int(eco.firms - keep.size),
        ))
    return EconomyResult(Panel(years), tuple(meta))
