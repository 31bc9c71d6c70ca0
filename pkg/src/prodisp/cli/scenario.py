"""Scenario files: one TOML table per model block, plus run-level settings.

Precedence for seed and output directory: command-line flag, then the
PRODISP_SEED / PRODISP_OUT environment variables, then the file.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..distributions import (
    GB2,
    DiscreteLevels,
    Exponential,
    FirmDistribution,
    GB2Params,
    Pareto,
    UniformGrid,
)
from ..margsim import LaborShareLaw
from ..markov import MarkovConfig

__all__ = [
    "ScenarioError",
    "Scenario",
    "EquilibriumBlock",
    "MarkovBlock",
    "DemandBlock",
    "LaborShareBlock",
    "EconomyBlock",
    "FitBlock",
    "load_scenario",
    "parse_scenario",
    "apply_overrides",
    "STAGE_BLOCKS",
]

DEFAULT_TRIM_TOP = 10
DEFAULT_SEED = 0


class ScenarioError(ValueError):
    """Scenario missing required blocks or holding invalid values."""


def _take(table: dict, name: str, allowed: set[str]) -> dict:
    extra = set(table) - allowed
    if extra:
        raise ScenarioError(f"[{name}] has unknown keys {sorted(extra)}")
    return table


def firm_distribution_from(table: dict) -> FirmDistribution:
    t = dict(table)
    kind = t.pop("kind", None)
    try:
        if kind == "pareto":
            _take(t, "firm_distribution", {"mu", "c0"})
            return Pareto(float(t["mu"]), float(t.get("c0", 1.0)))
        if kind == "exponential":
            _take(t, "firm_distribution", {"rate"})
            return Exponential(float(t["rate"]))
        if kind == "uniform-grid":
            _take(t, "firm_distribution", {"delta_c", "count"})
            return UniformGrid(float(t["delta_c"]), int(t["count"]))
        if kind == "discrete-levels":
            _take(t, "firm_distribution", {"values"})
            return DiscreteLevels(tuple(float(v) for v in t["values"]))
        if kind == "gb2":
            _take(t, "firm_distribution", {"a", "b", "p", "q"})
            return GB2(GB2Params(*(float(t[k]) for k in "abpq")))
    except KeyError as exc:
        raise ScenarioError(f"[firm_distribution] kind={kind!r} needs key {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"[firm_distribution]: {exc}") from None
    raise ScenarioError(f"[firm_distribution] unknown kind {kind!r}")


@dataclass(frozen=True)
class EquilibriumBlock:
    betas: tuple[float, ...] = ()
    demands: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.betas and not self.demands:
            raise ScenarioError("[equilibrium] needs 'betas' or 'demands'")


@dataclass(frozen=True)
class MarkovBlock:
    config: MarkovConfig
    horizon: float = 60.0
    replicas: int = 8


@dataclass(frozen=True)
class DemandBlock:
    delta: float
    width: float | None = None
    # fixed demand (single-beta economy) instead of the power-law density
    fixed: float | None = None
    beta_max: float | None = None


@dataclass(frozen=True)
class LaborShareBlock:
    law: LaborShareLaw
    samples: int = 100_000
    tail_fraction: float = 0.1


@dataclass(frozen=True)
class EconomyBlock:
    years: int = 20
    first_year: int = 2000
    firms: int = 2000
    workers: int = 1_000_000
    periods: int = 512
    sectors: int = 33
    sector_rule: str = "random"

    def __post_init__(self):
        if self.sector_rule not in ("random", "size-stratified"):
            raise ScenarioError(f"[economy] unknown sector_rule {self.sector_rule!r}")
        if not 1 <= self.sectors <= 33:
            raise ScenarioError("[economy] sectors must be between 1 and 33")
        if min(self.years, self.firms, self.workers, self.periods) < 1:
            raise ScenarioError("[economy] years, firms, workers, periods must be positive")


@dataclass(frozen=True)
class FitBlock:
    input: str | None = None
    tail_fraction: float = 0.1
    gb2: bool = True
    robustness: bool = False
    max_rejections: int = 100
    worker_weighting: str = "employment"

    def __post_init__(self):
        if self.worker_weighting not in ("employment", "firm"):
            raise ScenarioError(f"[fit] unknown worker_weighting {self.worker_weighting!r}")
        if not 0 < self.tail_fraction < 1:
            raise ScenarioError("[fit] tail_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Scenario:
    seed: int = DEFAULT_SEED
    out: str | None = None
    trim_top: int = DEFAULT_TRIM_TOP
    stages: tuple[str, ...] = ()
    firm_distribution: FirmDistribution | None = None
    equilibrium: EquilibriumBlock | None = None
    markov: MarkovBlock | None = None
    demand: DemandBlock | None = None
    labor_share: LaborShareBlock | None = None
    economy: EconomyBlock | None = None
    fit: FitBlock | None = None
    source: str | None = field(default=None, compare=False)

    def require(self, stages) -> None:
        """Raise listing every block the given stages need but the scenario lacks."""
        missing = []
        for st in stages:
            if st not in STAGE_BLOCKS:
                raise ScenarioError(f"unknown stage {st!r}")
            for blk in STAGE_BLOCKS[st]:
                if blk == "fit.input" and "gen" in stages:
                    continue
                if blk == "fit.input":
                    ok = self.fit is not None and self.fit.input is not None
                else:
                    ok = getattr(self, blk) is not None
                if not ok and blk not in missing:
                    missing.append(blk)
        if missing:
            raise ScenarioError(f"scenario is missing blocks: {', '.join(missing)}")


STAGE_BLOCKS = {
    "equilibrium": ("firm_distribution", "equilibrium"),
    "stationary": ("markov",),
    "simulate": ("markov",),
    "superstat": ("firm_distribution", "demand"),
    "fit": ("fit.input",),
    "mcarlo": ("firm_distribution", "labor_share"),
    "gen": ("firm_distribution", "demand", "economy"),
}
PIPELINE_ORDER = ("equilibrium", "stationary", "simulate", "superstat", "gen", "fit", "mcarlo")


def _markov_block(t: dict) -> MarkovBlock:
    t = dict(t)
    _take(t, "markov", {
        "rate_exponent", "cutoff_ratio", "a_plus", "a_minus", "entry_rate", "c_max",
        "city_constraint", "horizon", "replicas",
    })
    horizon = float(t.pop("horizon", 60.0))
    replicas = int(t.pop("replicas", 8))
    try:
        alpha = float(t["rate_exponent"])
        if "cutoff_ratio" in t:
            kw = {k: t[k] for k in ("a_minus", "entry_rate", "c_max") if k in t}
            cfg = MarkovConfig.from_cutoff(alpha, float(t["cutoff_ratio"]), **kw)
            if t.get("city_constraint"):
                cfg = replace(cfg, city_constraint=True)
        else:
            cfg = MarkovConfig(
                float(t["a_plus"]), float(t["a_minus"]), alpha,
                float(t["entry_rate"]), int(t["c_max"]), bool(t.get("city_constraint", False)),
            )
    except KeyError as exc:
        raise ScenarioError(f"[markov] needs key {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"[markov]: {exc}") from None
    return MarkovBlock(cfg, horizon, replicas)


def _labor_block(t: dict) -> LaborShareBlock:
    t = dict(t)
    _take(t, "labor_share", {"kind", "lo", "hi", "value", "samples", "tail_fraction"})
    samples = int(t.pop("samples", 100_000))
    tf = float(t.pop("tail_fraction", 0.1))
    try:
        law = LaborShareLaw(**t)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"[labor_share]: {exc}") from None
    return LaborShareBlock(law, samples, tf)


def parse_scenario(data: dict[str, Any], source: str | None = None) -> Scenario:
    top = {"seed", "out", "trim_top", "stages", "firm_distribution", "equilibrium", "markov",
           "demand", "labor_share", "economy", "fit"}
    _take(data, "top level", top)
    kw: dict[str, Any] = {"source": source}
    if "seed" in data:
        kw["seed"] = int(data["seed"])
    if "out" in data:
        kw["out"] = str(data["out"])
    if "trim_top" in data:
        kw["trim_top"] = int(data["trim_top"])
        if kw["trim_top"] < 0:
            raise ScenarioError("trim_top must be >= 0")
    if "stages" in data:
        kw["stages"] = tuple(data["stages"])
        bad = [s for s in kw["stages"] if s not in STAGE_BLOCKS]
        if bad:
            raise ScenarioError(f"unknown stages {bad}")
    if "firm_distribution" in data:
        kw["firm_distribution"] = firm_distribution_from(data["firm_distribution"])
    if "equilibrium" in data:
        t = _take(dict(data["equilibrium"]), "equilibrium", {"betas", "demands"})
        kw["equilibrium"] = EquilibriumBlock(
            tuple(float(b) for b in t.get("betas", ())),
            tuple(float(d) for d in t.get("demands", ())),
        )
    if "markov" in data:
        kw["markov"] = _markov_block(data["markov"])
    if "demand" in data:
        t = _take(dict(data["demand"]), "demand", {"delta", "width", "fixed", "beta_max"})
        if "delta" not in t:
            raise ScenarioError("[demand] needs key 'delta'")
        delta = float(t["delta"])
        if not delta < 1:
            raise ScenarioError("[demand] delta must be < 1")
        kw["demand"] = DemandBlock(
            delta,
            None if t.get("width") is None else float(t["width"]),
            None if t.get("fixed") is None else float(t["fixed"]),
            None if t.get("beta_max") is None else float(t["beta_max"]),
        )
    if "labor_share" in data:
        kw["labor_share"] = _labor_block(data["labor_share"])
    if "economy" in data:
        t = _take(dict(data["economy"]), "economy", set(EconomyBlock.__dataclass_fields__))
        kw["economy"] = EconomyBlock(**t)
    if "fit" in data:
        t = _take(dict(data["fit"]), "fit", set(FitBlock.__dataclass_fields__))
        kw["fit"] = FitBlock(**t)
    return Scenario(**kw)


def load_scenario(path) -> Scenario:
    path = Path(path)
    with path.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    sc = parse_scenario(data, str(path))
    # relative input paths resolve against the scenario file
    if sc.fit is not None and sc.fit.input is not None and not Path(sc.fit.input).is_absolute():
        sc = replace(sc, fit=replace(sc.fit, input=str(path.parent / sc.fit.input)))
    return sc


def apply_overrides(
    sc: Scenario,
    *,
    seed: int | None = None,
    out: str | None = None,
    trim_top: int | None = None,
    environ=None,
) -> Scenario:
    env = os.environ if environ is None else environ
    kw = {}
    if env.get("PRODISP_SEED"):
        try:
            kw["seed"] = int(env["PRODISP_SEED"])
        except ValueError:
            raise ScenarioError(f"PRODISP_SEED={env['PRODISP_SEED']!r} is not an integer") from None
    if env.get("PRODISP_OUT"):
        kw["out"] = env["PRODISP_OUT"]
    if seed is not None:
        kw["seed"] = seed
    if out is not None:
        kw["out"] = out
    if trim_top is not None:
        if trim_top < 0:
            raise ScenarioError("trim_top must be >= 0")
        kw["trim_top"] = trim_top
    return replace(sc, **kw)
