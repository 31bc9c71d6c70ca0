"""Firm panels: CSV ingestion, top-productivity trimming, worker weighting, sectors."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fitting import DEFAULT_TAIL_FRACTION, ParetoFit, hill_estimator

__all__ = [
    "PANEL_COLUMNS",
    "WEIGHTINGS",
    "PanelSchemaError",
    "PanelRejectionError",
    "FirmRecord",
    "Panel",
    "Rejection",
    "ingest_panel",
    "write_panel_csv",
    "TrimAudit",
    "trim_outliers",
    "trim_robustness",
    "WeightedSample",
    "worker_weighted_sample",
    "aggregate_sectors",
]

PANEL_COLUMNS = ("firm_id", "year", "output", "workers", "sector")
MAX_SECTORS = 33
DEFAULT_MAX_REJECTIONS = 100
ROBUSTNESS_CUTS = (10, 20)
WEIGHTINGS = {
    "employment": "firm-size: each firm contributes weight L at its productivity c",
    "firm": "unweighted control: each firm contributes weight 1",
}
WORKER_WEIGHTING = WEIGHTINGS["employment"]


class PanelSchemaError(ValueError):
    """The CSV header is missing required columns."""


class PanelRejectionError(ValueError):
    """More malformed rows than the configured ceiling."""

    def __init__(self, message, rejections):
        super().__init__(message)
        self.rejections = rejections


@dataclass(frozen=True)
class FirmRecord:
    """One firm-year. ``productivity`` is output/workers in 10^6 yen per person."""

    firm_id: str
    year: int
    output: float
    workers: int
    sector: str
    productivity: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.workers, (int, np.integer)) or self.workers < 1:
            raise ValueError(f"workers must be an integer >= 1, got {self.workers!r}")
        if not (math.isfinite(self.output) and self.output > 0):
            raise ValueError(f"output must be finite and positive, got {self.output!r}")
        object.__setattr__(self, "productivity", self.output / self.workers)


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


@dataclass(frozen=True, eq=False)
class Panel:
    """Firm records grouped by year (years ascending, records in file order)."""

    years: dict[int, tuple[FirmRecord, ...]]
    rejections: tuple[Rejection, ...] = ()

    @property
    def counts(self) -> dict[int, int]:
        return {y: len(r) for y, r in self.years.items()}

    def records(self):
        for y in self.years:
            yield from self.years[y]

    def arrays(self, year: int):
        """(productivity, workers, output, sector) arrays for one year."""
        recs = self.years[year]
        c = np.array([r.productivity for r in recs])
        L = np.array([r.workers for r in recs], dtype=np.int64)
        Y = np.array([r.output for r in recs])
        s = np.array([r.sector for r in recs], dtype=object)
        return c, L, Y, s

    def max_productivity(self) -> float:
        return max((r.productivity for r in self.records()), default=math.nan)


def _parse_row(row, line):
    try:
        year = int(row["year"])
    except ValueError:
        raise ValueError(f"year {row['year']!r} is not an integer") from None
    try:
        output = float(row["output"])
    except ValueError:
        raise ValueError(f"output {row['output']!r} is not a number") from None
    try:
        workers = int(row["workers"])
    except ValueError:
        raise ValueError(f"workers {row['workers']!r} is not an integer") from None
    firm_id = row["firm_id"].strip()
    if not firm_id:
        raise ValueError("empty firm_id")
    return FirmRecord(firm_id, year, output, workers, row["sector"].strip())


def ingest_panel(path, *, max_rejections: int = DEFAULT_MAX_REJECTIONS) -> Panel:
    """Read a firm_id,year,output,workers,sector CSV.

    Rows that fail to parse or violate the record invariants are collected
    with their line numbers. More than ``max_rejections`` of them is an error;
    a header without the required columns is always an error.
    """
    path = Path(path)
    by_year = defaultdict(list)
    rejections = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in PANEL_COLUMNS if c not in header]
        if missing:
            raise PanelSchemaError(f"{path}: missing columns {missing}")
        for row in reader:
            line = reader.line_num
            if None in row.values() or None in row:
                rejections.append(Rejection(line, "wrong number of fields"))
                continue
            try:
                rec = _parse_row(row, line)
            except ValueError as exc:
                rejections.append(Rejection(line, str(exc)))
                continue
            by_year[rec.year].append(rec)
    if len(rejections) > max_rejections:
        raise PanelRejectionError(
            f"{path}: {len(rejections)} malformed rows exceed the ceiling of {max_rejections}"
            f" (first at line {rejections[0].line}: {rejections[0].reason})",
            rejections,
        )
    years = {y: tuple(by_year[y]) for y in sorted(by_year)}
    return Panel(years, tuple(rejections))


def write_panel_csv(path, panel: Panel) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for r in panel.records():
            w.writerow([r.firm_id, r.year, repr(float(r.output)), r.workers, r.sector])
    return path


# --------------------------------------------------------------------------
# trimming
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrimAudit:
    trim_top: int
    removed: tuple[tuple[int, str, float], ...]

    def as_dict(self):
        return {
            "trim_top": self.trim_top,
            "removed": [{"year": y, "firm_id": f, "productivity": c} for y, f, c in self.removed],
        }


def trim_outliers(panel: Panel, trim_top: int) -> tuple[Panel, TrimAudit]:
    """Drop the ``trim_top`` highest-productivity firms in every year."""
    if trim_top < 0:
        raise ValueError("trim_top must be >= 0")
    if trim_top == 0:
        return panel, TrimAudit(0, ())
    years = {}
    removed = []
    for y, recs in panel.years.items():
        c = np.array([r.productivity for r in recs])
        order = np.argsort(-c, kind="stable")
        drop = set(order[:trim_top].tolist())
        for i in order[:trim_top]:
            removed.append((y, recs[i].firm_id, float(c[i])))
        years[y] = tuple(r for i, r in enumerate(recs) if i not in drop)
    return Panel(years, panel.rejections), TrimAudit(trim_top, tuple(removed))


def trim_robustness(
    panel: Panel,
    cuts=ROBUSTNESS_CUTS,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
) -> dict:
    """Firm-level Hill index per year under each cut and the change between cuts.

    ``within_bands`` compares each change with three combined standard errors.
    """
    fits = {}
    for k in cuts:
        trimmed, _ = trim_outliers(panel, k)
        fits[k] = {y: hill_estimator(trimmed.arrays(y)[0], tail_fraction) for y in trimmed.years}
    base, alt = cuts[0], cuts[-1]
    rows = {}
    for y in panel.years:
        f0, f1 = fits[base][y], fits[alt][y]
        rows[y] = {
            f"mu_trim{base}": f0.mu_hat,
            f"mu_trim{alt}": f1.mu_hat,
            "delta": f1.mu_hat - f0.mu_hat,
            "within_bands": f0.agrees_with(f1),
        }
    return {"cuts": list(cuts), "years": rows}


# --------------------------------------------------------------------------
# worker weighting and sectors
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightedSample:
    values: np.ndarray
    weights: np.ndarray
    weighting: str = WORKER_WEIGHTING

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def survival(self, c: float) -> float:
        """Share of total weight at productivity >= c."""
        return float(self.weights[self.values >= c].sum() / self.weights.sum())

    def hill(self, tail_fraction: float = DEFAULT_TAIL_FRACTION) -> ParetoFit:
        return hill_estimator(self.values, tail_fraction, weights=self.weights)


def worker_weighted_sample(
    panel: Panel, year: int | None = None, weighting: str = "employment"
) -> WeightedSample:
    """Productivities weighted by employment: firm i carries weight L_i at c_i.

    ``weighting="firm"`` gives every firm weight 1 instead, a control that
    reproduces the firm-level distribution.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"unknown weighting {weighting!r}; choose from {sorted(WEIGHTINGS)}")
    years = panel.years if year is None else {year: panel.years[year]}
    recs = [r for y in years for r in years[y]]
    c = np.array([r.productivity for r in recs])
    if weighting == "employment":
        w = np.array([r.workers for r in recs], dtype=np.int64)
    else:
        w = np.ones(c.size, dtype=np.int64)
    return WeightedSample(c, w, WEIGHTINGS[weighting])


def aggregate_sectors(panel: Panel) -> dict[int, dict[str, tuple[float, int]]]:
    """Per year, sector productivity sum(Y)/sum(L) and sector employment."""
    out = {}
    for y, recs in panel.years.items():
        acc = defaultdict(lambda: [0.0, 0])
        for r in recs:
            acc[r.sector][0] += r.output
            acc[r.sector][1] += r.workers
        if len(acc) > MAX_SECTORS:
            raise ValueError(f"year {y} has {len(acc)} sectors, more than {MAX_SECTORS}")
        out[y] = {s: (yy / ll, ll) for s, (yy, ll) in sorted(acc.items())}
    return out
