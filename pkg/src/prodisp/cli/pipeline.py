"""Stage runners and the atomic result bundle.

Every stage writes into a private temporary directory next to the output
directory. On success the directory is renamed into place; on failure it is
kept as ``<out>.failed`` so upstream artifacts survive, and :class:`StageError`
names the failing stage.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import shutil
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..distributions import Pareto, UniformGrid
from ..equilibrium import (
    beta_of_demand,
    demand_variance,
    uniform_closed_form,
    worker_distribution,
)
from ..fitting import (
    ConvergenceError,
    InsufficientTailError,
    ParetoFit,
    gb2_mle,
    hill_estimator,
    pareto_index_from_gb2,
    select_fit_range,
    write_rank_size_csv,
)
from ..margsim import marginal_from_average, verify_tail_equality
from ..markov import (
    aggregate_integrals,
    master_residual,
    simulate_replicas,
    stationary_solution,
    tail_exponents,
    write_counts_csv,
)
from ..superstats import (
    DemandLaw,
    InconsistentIndicesError,
    SuperstatConfig,
    delta_of,
    delta_stderr,
    demand_density,
    mu_worker_of,
    worker_dist_super,
)
from .economy import generate_synthetic_economy
from .panel import (
    WEIGHTINGS,
    aggregate_sectors,
    ingest_panel,
    trim_outliers,
    trim_robustness,
    worker_weighted_sample,
    write_panel_csv,
)
from .scenario import PIPELINE_ORDER, Scenario, ScenarioError

__all__ = ["SCHEMA_VERSION", "StageError", "RunBundle", "run_pipeline", "run_stage"]

SCHEMA_VERSION = 1
DEFAULT_OUT = "prodisp-out"
DEFAULT_PIPELINE = ("gen", "fit")
# fixed per-stage offsets so stages draw from independent streams
_STAGE_STREAM = {name: i for i, name in enumerate(PIPELINE_ORDER)}


class StageError(RuntimeError):
    def __init__(self, stage, cause, preserved):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.preserved = preserved


class RunBundle:
    """Paths and parsed summary of a finished run."""

    def __init__(self, out: Path, summary: dict):
        self.out = out
        self.summary = summary

    @property
    def files(self) -> list[Path]:
        return [self.out / m["path"] for m in self.summary["manifest"]]


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_columns(path: Path, header, *cols) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def _stage_seed(sc: Scenario, stage: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([sc.seed, _STAGE_STREAM[stage]])


def _fit_record(fit: ParetoFit, **labels) -> dict:
    return {**labels, **asdict(fit)}


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def _stage_equilibrium(sc: Scenario, out: Path, ctx: dict) -> dict:
    dist = sc.firm_distribution
    blk = sc.equilibrium
    betas = list(blk.betas) + [beta_of_demand(dist, d) for d in blk.demands]
    rows = []
    for k, beta in enumerate(betas):
        st = worker_distribution(dist, beta)
        var = demand_variance(dist, beta)
        row = {
            "beta": beta,
            "demand": st.demand,
            "log_partition": st.log_partition,
            "variance": var,
            "normalization": st.normalization,
            "file": f"worker_{k:02d}.csv",
        }
        if isinstance(dist, UniformGrid):
            cf = uniform_closed_form(dist.delta_c, dist.count, beta)
            row["closed_form_demand"] = cf.demand_approx
            row["closed_form_valid"] = cf.valid
        if dist.discrete:
            _write_columns(out / row["file"], ["c", "probability", "survival"],
                           st.grid, st.density, st.survival)
        else:
            _write_columns(out / row["file"], ["c", "density", "survival"],
                           st.grid, st.density, st.survival)
        rows.append(row)
    _write_columns(
        out / "equilibrium.csv", ["beta", "demand", "log_partition", "variance"],
        [r["beta"] for r in rows], [r["demand"] for r in rows],
        [r["log_partition"] for r in rows], [r["variance"] for r in rows],
    )
    return {"distribution": dist.kind, "points": rows}


def _markov_window(cfg):
    hi = int(min(1000, cfg.c_max // 10))
    return 10, max(hi, 11)


def _stage_stationary(sc: Scenario, out: Path, ctx: dict) -> dict:
    cfg = sc.markov.config
    st = stationary_solution(cfg)
    write_counts_csv(out / "stationary.csv", st.counts)
    resid = master_residual(cfg, st)
    lo, hi = _markov_window(cfg)
    agg = aggregate_integrals(cfg.rate_exponent, cfg.cutoff_ratio, st.counts[0])
    return {
        "total_firms": st.total_firms,
        "aggregate_index": st.aggregate_index,
        "max_abs_residual_over_entry": float(np.max(np.abs(resid))) / cfg.entry_rate,
        "window": [lo, hi],
        "exponents": tail_exponents(st.counts, lo, hi),
        "continuum": asdict(agg),
        "c_star": cfg.c_star,
    }


def _stage_simulate(sc: Scenario, out: Path, ctx: dict) -> dict:
    blk = sc.markov
    cfg = blk.config
    seed = int(_stage_seed(sc, "simulate").generate_state(1, dtype=np.uint32)[0])
    rep = simulate_replicas(cfg, blk.horizon, seed, blk.replicas)
    c = np.arange(1, cfg.c_max + 1)
    _write_columns(out / "simulated.csv", ["c", "mean_count", "stderr"], c, rep.mean, rep.stderr)
    lo, hi = _markov_window(cfg)
    return {
        "replicas": blk.replicas,
        "horizon": blk.horizon,
        "events": rep.events,
        "mean_firms": float(rep.mean.sum()),
        "exponents": tail_exponents(rep.mean, lo, hi),
        "runs": [r.summary() for r in rep.replicas],
    }


def _stage_superstat(sc: Scenario, out: Path, ctx: dict) -> dict:
    dist = sc.firm_distribution
    if not isinstance(dist, Pareto):
        raise ScenarioError("superstat needs a pareto firm_distribution")
    dem = sc.demand
    law = DemandLaw.for_pareto(dist, dem.delta, dem.width)
    cfg = SuperstatConfig.from_demand_law(law, c0=dist.c0, beta_max=dem.beta_max)
    wd = worker_dist_super(cfg)
    _write_columns(out / "superstat.csv", ["c", "density", "survival"], wd.grid, wd.density, wd.survival)
    dd = demand_density(law)
    d = np.linspace(dd.lower, dd.ceiling, 201)[:-1]
    _write_columns(out / "demand_density.csv", ["demand", "density"], d, dd.pdf(d))
    measured = hill_estimator(wd.quantile_grid(200_000), 0.01)
    record = {
        "mu_f": dist.mu,
        "gamma": cfg.gamma,
        "delta": dem.delta,
        "mu_w": mu_worker_of(dist.mu, dem.delta),
    }
    _write_json(out / "superstat.json", record)
    return {**record, "beta_max": cfg.beta_max, "partition": wd.partition_value,
            "hill_on_tabulated_tail": asdict(measured)}


def _stage_gen(sc: Scenario, out: Path, ctx: dict) -> dict:
    res = generate_synthetic_economy(sc)
    write_panel_csv(out / "panel.csv", res.panel)
    ctx["panel"] = res.panel
    return {**res.summary(), "counts": res.panel.counts}


def _year_fits(panel, tail_fraction, gb2, weighting, out):
    fits = []
    deltas = {}
    gb2_failures = {}
    ranges = {}
    for y in panel.years:
        c, L, _, _ = panel.arrays(y)
        ff = hill_estimator(c, tail_fraction)
        ws = worker_weighted_sample(panel, y, weighting)
        fw = ws.hill(tail_fraction)
        fits.append(_fit_record(ff, level="firm", year=y))
        fits.append(_fit_record(fw, level="worker", year=y))
        write_rank_size_csv(out / f"rank_size_firm_{y}.csv", c)
        write_rank_size_csv(out / f"rank_size_worker_{y}.csv", ws.values, ws.weights)
        try:
            ranges[y] = list(select_fit_range(c))
        except InsufficientTailError as exc:
            ranges[y] = {"error": str(exc)}
        if gb2:
            try:
                g = gb2_mle(c)
            except ConvergenceError as exc:
                gb2_failures[y] = {
                    "message": str(exc),
                    "ridge_tail_index": exc.ridge_tail_index,
                    "ridge_tail_stderr": exc.ridge_tail_stderr,
                }
            else:
                fits.append({
                    **_fit_record(pareto_index_from_gb2(g), level="firm", year=y),
                    "gb2": asdict(g.params),
                    "gb2_stderr": dict(zip("abpq", g.stderr)),
                })
        try:
            d = delta_of(ff.mu_hat, fw.mu_hat)
            se = delta_stderr(ff.mu_hat, fw.mu_hat, ff.stderr, fw.stderr)
            deltas[y] = {"delta": d, "stderr": se}
        except InconsistentIndicesError as exc:
            deltas[y] = {"delta": None, "stderr": None, "reason": str(exc)}
    return fits, deltas, gb2_failures, ranges


def _stage_fit(sc: Scenario, out: Path, ctx: dict) -> dict:
    blk = sc.fit
    tail = 0.1 if blk is None else blk.tail_fraction
    if blk is not None and blk.input is not None:
        panel = ingest_panel(blk.input, max_rejections=blk.max_rejections)
    elif "panel" in ctx:
        panel = ctx["panel"]
    else:
        raise ScenarioError("fit needs [fit] input or a preceding gen stage")
    trimmed, audit = trim_outliers(panel, sc.trim_top)
    _write_json(out / "trim_audit.json", audit.as_dict())
    weighting = "employment" if blk is None else blk.worker_weighting
    fits, deltas, gb2_failures, ranges = _year_fits(
        trimmed, tail, blk is None or blk.gb2, weighting, out
    )
    # sectors pooled over years: 33 per year is too few for a tail fit alone
    sectors = aggregate_sectors(trimmed)
    sec_c = np.array([v[0] for yv in sectors.values() for v in yv.values()])
    sector_fit = None
    if sec_c.size * tail >= 30:
        sector_fit = hill_estimator(sec_c, tail)
        fits.append(_fit_record(sector_fit, level="sector", year=None))
    result = {
        "counts": trimmed.counts,
        "rejections": [asdict(r) for r in panel.rejections],
        "trim_top": sc.trim_top,
        "removed": len(audit.removed),
        "weighting": WEIGHTINGS[weighting],
        "ks_fit_range": ranges,
        "gb2_not_converged": gb2_failures,
    }
    if blk is not None and blk.robustness:
        result["robustness"] = trim_robustness(panel, tail_fraction=tail)
    ctx["fits"].extend(fits)
    ctx["delta_by_year"].update(deltas)
    return result


def _stage_mcarlo(sc: Scenario, out: Path, ctx: dict) -> dict:
    blk = sc.labor_share
    ss = _stage_seed(sc, "mcarlo")
    s_c, s_a = ss.spawn(2)
    c = sc.firm_distribution.rvs(blk.samples, np.random.default_rng(s_c))
    cm = marginal_from_average(c, blk.law, int(s_a.generate_state(1, dtype=np.uint32)[0]))
    write_rank_size_csv(out / "rank_size_c.csv", c)
    write_rank_size_csv(out / "rank_size_cm.csv", cm)
    cmp = verify_tail_equality(c, cm, blk.tail_fraction)
    ctx["fits"].append(_fit_record(cmp.fit_c, level="average", year=None))
    ctx["fits"].append(_fit_record(cmp.fit_marginal, level="marginal", year=None))
    return {
        "equal": cmp.equal,
        "difference": cmp.difference,
        "combined_stderr": cmp.combined_stderr,
        "share_rank_correlation": cmp.share_rank_correlation,
        "independence_violated": cmp.independence_violated,
    }


_STAGES = {
    "equilibrium": _stage_equilibrium,
    "stationary": _stage_stationary,
    "simulate": _stage_simulate,
    "superstat": _stage_superstat,
    "gen": _stage_gen,
    "fit": _stage_fit,
    "mcarlo": _stage_mcarlo,
}


# --------------------------------------------------------------------------
# bundle
# --------------------------------------------------------------------------


def _manifest(root: Path) -> list[dict]:
    out = []
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "summary.json":
            data = p.read_bytes()
            out.append({
                "path": p.relative_to(root).as_posix(),
                "bytes": len(data),
                "sha256": hashlib.sha256(data).hexdigest(),
            })
    return out


def _replace_dir(src: Path, dst: Path) -> None:
    if dst.exists():
        backup = Path(tempfile.mkdtemp(prefix=f".{dst.name}.old-", dir=dst.parent))
        backup.rmdir()
        dst.rename(backup)
        src.rename(dst)
        shutil.rmtree(backup)
    else:
        src.rename(dst)


def run_pipeline(scenario: Scenario, stages=None) -> RunBundle:
    """Run ``stages`` (default: the scenario's list, else gen then fit) into one bundle."""
    if stages is None:
        stages = scenario.stages or DEFAULT_PIPELINE
    stages = [s for s in PIPELINE_ORDER if s in stages]
    scenario.require(stages)
    out = Path(scenario.out or DEFAULT_OUT)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.tmp-", dir=out.parent))
    ctx = {"fits": [], "delta_by_year": {}}
    stage_summaries = {}
    for st in stages:
        try:
            stage_summaries[st] = _STAGES[st](scenario, tmp, ctx)
        except Exception as exc:
            failed = out.with_name(out.name + ".failed")
            if failed.exists():
                shutil.rmtree(failed)
            tmp.rename(failed)
            preserved = [str(failed / m["path"]) for m in _manifest(failed)]
            raise StageError(st, exc, preserved) from exc
    summary = {
        "schema_version": SCHEMA_VERSION,
        "seed": scenario.seed,
        "trim_top": scenario.trim_top,
        "stages": stages,
        "fits": ctx["fits"],
        "delta_by_year": ctx["delta_by_year"],
        "stage_summaries": stage_summaries,
        "manifest": _manifest(tmp),
    }
    _write_json(tmp / "summary.json", summary)
    _replace_dir(tmp, out)
    return RunBundle(out, json.loads((out / "summary.json").read_text()))


def run_stage(scenario: Scenario, stage: str) -> RunBundle:
    return run_pipeline(scenario, [stage])
