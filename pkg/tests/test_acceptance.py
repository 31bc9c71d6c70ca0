"""Acceptance criteria 1-11, each at its stated tolerance and runtime bound.

Every test records one PASS/FAIL line (shown in the terminal summary) before
asserting, so a failing criterion still reports what was measured.
"""

import math
import time
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE_LINES
from prodisp.cli.main import main
from prodisp.cli.pipeline import run_pipeline
from prodisp.cli.scenario import DemandBlock, EconomyBlock, FitBlock, Scenario
from prodisp.distributions import GB2, DiscreteLevels, Exponential, GB2Params, Pareto, UniformGrid
from prodisp.equilibrium import demand_of_beta, demand_variance
from prodisp.fitting import gb2_mle, hill_estimator, pareto_index_from_gb2
from prodisp.margsim import LaborShareLaw, marginal_from_average, verify_tail_equality
from prodisp.markov import (
    MarkovConfig,
    aggregate_integrals,
    count_exponent,
    master_residual,
    simulate_replicas,
    stationary_solution,
)
from prodisp.superstats import (
    SuperstatConfig,
    bfactor_asymptotic,
    delta_of,
    generalized_boltzmann,
    mu_worker_of,
    verify_small_beta_scaling,
)

ROOT = Path(__file__).resolve().parents[1]


def record(n, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  ({elapsed:.1f} s / {limit:g} s)  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


# 1 ---------------------------------------------------------------------------------


def test_criterion_01_uniform_grid_closed_form():
    t = time.perf_counter()
    g = UniformGrid(0.01, 100_000)
    errs = {b: abs(demand_of_beta(g, b) - 1 / b) * b for b in (0.01, 0.05)}
    el = time.perf_counter() - t
    record(1, all(e < 0.01 for e in errs.values()), el, 1.0,
           "rel err " + ", ".join(f"beta={b}: {e:.2e}" for b, e in errs.items()))


# 2 ---------------------------------------------------------------------------------


DEMAND_PROPERTY_KINDS = {
    "pareto(mu=3)": Pareto(3.0),
    "exponential(1)": Exponential(1.0),
    "uniform-grid(0.01, 10^4)": UniformGrid(0.01, 10_000),
    "discrete-levels(1..33)": DiscreteLevels(tuple(float(k) for k in range(1, 34))),
}


def test_criterion_02_demand_temperature_properties():
    t = time.perf_counter()
    problems = []
    worst_var = 0.0
    for name, dist in DEMAND_PROPERTY_KINDS.items():
        mean0, lo = dist.mean(), dist.lower
        betas = np.geomspace(1e-4 / mean0, 1e2 / mean0, 50)
        d = np.array([demand_of_beta(dist, b) for b in betas])
        if not np.all(np.diff(d) < 0):
            problems.append(f"{name}: D not decreasing in beta")
        # variance identity: central difference with h = 1e-4 beta
        for b in betas:
            h = 1e-4 * b
            fd = (demand_of_beta(dist, b + h) - demand_of_beta(dist, b - h)) / (2 * h)
            rel = abs(-fd / demand_variance(dist, b) - 1)
            worst_var = max(worst_var, rel)
            if rel > 1e-4:
                problems.append(f"{name}: variance identity off by {rel:.1e} at beta={b:.3g}")
                break
        # (ii) large beta: D -> lower end of the support
        if lo > 0:
            d_hi = demand_of_beta(dist, 1e3 / lo)
            if abs(d_hi / lo - 1) > 0.05:
                problems.append(f"{name}: limit (ii) D={d_hi:.4g} vs {lo:.4g}")
        else:
            # support reaching 0 has no 1e3/inf scale; use the mean as the scale instead
            d_hi = demand_of_beta(dist, 1e3 / mean0)
            if d_hi > 0.05 * mean0:
                problems.append(f"{name}: limit (ii) D={d_hi:.4g} not near 0")
        # (iii) small beta: D -> <c>_0
        d_lo = demand_of_beta(dist, 1e-6 / mean0)
        if abs(d_lo / mean0 - 1) > 0.01:
            problems.append(f"{name}: limit (iii) D={d_lo:.6g} vs {mean0:.6g}")
    el = time.perf_counter() - t
    detail = "; ".join(problems) if problems else f"4 kinds, worst variance-identity rel err {worst_var:.1e}"
    record(2, not problems, el, 10.0, detail)


# 3 ---------------------------------------------------------------------------------


# log-spaced bins over 1 <= c <= 1000 (right edge exclusive, last bin ends at 1000)
BIN_EDGES = np.array([1, 2, 3, 5, 9, 17, 33, 65, 129, 257, 513, 1001])


def _bin_sums(n):
    return np.array([n[a - 1 : b - 1].sum() for a, b in zip(BIN_EDGES[:-1], BIN_EDGES[1:])])


def test_criterion_03_markov_exact_vs_simulated():
    t = time.perf_counter()
    p = 20.0
    cfg = MarkovConfig.from_cutoff(2.0, 1e-4, entry_rate=p)
    exact = stationary_solution(cfg)
    resid = float(np.max(np.abs(master_residual(cfg, exact))))
    # a 30-unit warm-up exceeds the ~2 ln(c*) return time of high-c excursions; 48 replicas
    # keep the replica standard error itself well determined across the 11 bins
    rep = simulate_replicas(cfg, 60.0, 0, 48, warmup_fraction=0.5)
    per = np.stack([_bin_sums(r.counts) for r in rep.replicas])
    se = per.std(axis=0, ddof=1) / math.sqrt(per.shape[0])
    z = (per.mean(axis=0) - _bin_sums(exact.counts)) / se
    hill = count_exponent(exact.counts, 10, 1000)
    el = time.perf_counter() - t
    ok = np.all(np.abs(z) < 3) and resid < 1e-12 * p and abs(hill - 2.0) <= 0.1
    record(3, ok, el, 120.0,
           f"max |z| over {z.size} bins = {np.max(np.abs(z)):.2f}, residual/p = {resid / p:.1e}, "
           f"count exponent = {hill:.4f} (simulated {count_exponent(rep.mean, 10, 1000):.3f})")


# 4 ---------------------------------------------------------------------------------


def test_criterion_04_finiteness_argument():
    t = time.perf_counter()
    vals = {e: aggregate_integrals(1.5, e) for e in (1e-2, 1e-3, 1e-4)}
    cs = [v.aggregate_index for v in vals.values()]
    ks = [v.total_firms for v in vals.values()]
    c_ratio = cs[-1] / cs[0]
    k_change = abs(ks[-1] / ks[0] - 1)
    el = time.perf_counter() - t
    ok = c_ratio >= 10 and k_change < 0.05 and cs[0] < cs[1] < cs[2]
    record(4, ok, el, 10.0, f"C grows x{c_ratio:.2f} (need >= 10), K changes {k_change:.1%} (need < 5%)")


# 5 ---------------------------------------------------------------------------------


def test_criterion_05_superstat_asymptotics():
    t = time.perf_counter()
    bm = 1.0
    ratios = {}
    for g in (0.0, 0.25, 0.5, 0.75):
        cfg = SuperstatConfig(g, bm, Pareto(1.5))
        c = 1e3 / bm
        ratios[g] = generalized_boltzmann(cfg, c)[0] / float(bfactor_asymptotic(g, c, bm))
    el = time.perf_counter() - t
    ok = all(0.98 <= r <= 1.02 for r in ratios.values())
    record(5, ok, el, 5.0, "ratios " + ", ".join(f"g={g}: {r:.5f}" for g, r in ratios.items()))


# 6 ---------------------------------------------------------------------------------


def test_criterion_06_index_algebra():
    t = time.perf_counter()
    hand = mu_worker_of(1.5, -1.0) == 2.5 and mu_worker_of(3.0, 0.5) == 3.5
    cont = all(2.0 - d + 1.0 == (2.0 - 1.0) * (1.0 - d) + 2.0 == mu_worker_of(2.0, d)
               for d in (-2.0, -1.0, 0.0, 0.5))
    rt = max(
        abs(delta_of(mf, mu_worker_of(mf, d)) - d)
        for mf in (1.2, 1.5, 1.9, 2.5, 3.0, 5.0)
        for d in (-2.0, -1.0, 0.0, 0.5)
    )
    fixed = max(abs(mu_worker_of(1 + 1e-3, d) - 1) for d in (-2.0, -1.0, 0.0, 0.5))
    el = time.perf_counter() - t
    ok = hand and cont and rt < 1e-14 and fixed < 5e-3
    record(6, ok, el, 1.0,
           f"hand values {hand}, continuity {cont}, roundtrip max err {rt:.1e}, fixed-point gap {fixed:.1e}")


# 7 ---------------------------------------------------------------------------------


def test_criterion_07_small_beta_scaling():
    t = time.perf_counter()
    f3 = verify_small_beta_scaling(Pareto(3.0), np.logspace(-7, -4, 12))
    f15 = verify_small_beta_scaling(Pareto(1.5), np.logspace(-8, -5, 12))
    el = time.perf_counter() - t
    ok = (abs(f3.slope - 1.0) <= 0.03 and abs(f15.slope - 0.5) <= 0.03
          and f3.r_squared > 0.999 and f15.r_squared > 0.999)
    record(7, ok, el, 30.0,
           f"mu=3 slope {f3.slope:.4f} (R2 {f3.r_squared:.6f}); mu=1.5 slope {f15.slope:.4f} "
           f"(R2 {f15.r_squared:.6f})")


# 8 ---------------------------------------------------------------------------------


def test_criterion_08_marginal_vs_average():
    t = time.perf_counter()
    law = LaborShareLaw.uniform(0.5, 1.0)
    agree = 0
    for s in range(10):
        c = Pareto(1.5).rvs(100_000, np.random.default_rng(1000 + s))
        agree += verify_tail_equality(c, marginal_from_average(c, law, s)).equal
    c = Pareto(1.5).rvs(100_000, np.random.default_rng(999))
    diff = verify_tail_equality(c, marginal_from_average(c, LaborShareLaw.constant(0.7), 0)).difference
    # "exactly equal": equal up to the rounding of the products 0.7 * c in floating point
    exact = abs(diff) <= 8 * np.finfo(float).eps
    el = time.perf_counter() - t
    record(8, agree >= 9 and exact, el, 30.0,
           f"{agree}/10 seeds agree within 3 sigma; alpha=0.7 index difference {diff:.1e}")


# 9 ---------------------------------------------------------------------------------


def test_criterion_09_estimator_suite():
    t = time.perf_counter()
    hill_err = {}
    for mu in (1.0, 1.5, 2.5):
        n = 1_000_000
        grid = (np.arange(1, n + 1) / (n + 1.0)) ** (-1.0 / mu)
        hill_err[mu] = abs(hill_estimator(grid, 0.1).mu_hat - mu)
    true = GB2Params(2.0, 50.0, 1.2, 0.75)
    x = GB2(true).rvs(50_000, np.random.default_rng(0))
    fit = gb2_mle(x)
    rel = np.abs(fit.params.as_array() / true.as_array() - 1)
    cross = pareto_index_from_gb2(fit).agrees_with(hill_estimator(x, 0.1))
    el = time.perf_counter() - t
    ok = all(e < 1e-3 for e in hill_err.values()) and np.all(rel < 0.05) and cross
    record(9, ok, el, 120.0,
           "Hill err " + ", ".join(f"{m}: {e:.1e}" for m, e in hill_err.items())
           + "; GB2 rel err a,b,p,q = " + ", ".join(f"{v:.3f}" for v in rel)
           + f"; a*q vs Hill within 3 sigma: {cross}")


# 10 --------------------------------------------------------------------------------


def _closed_loop(seed, out):
    sc = Scenario(
        seed=seed,
        out=str(out),
        trim_top=0,
        firm_distribution=Pareto(1.5),
        demand=DemandBlock(-1.0),
        economy=EconomyBlock(),
        fit=FitBlock(gb2=False),
    )
    s = run_pipeline(sc, ["gen", "fit"]).summary
    fits = [f for f in s["fits"] if f["year"] is not None and f["method"] == "hill"]
    firm = [f for f in fits if f["level"] == "firm"]
    work = [f for f in fits if f["level"] == "worker"]
    deltas = [v for v in s["delta_by_year"].values()]
    return firm, work, deltas


def _mean_and_se(vals, ses):
    vals, ses = np.asarray(vals, float), np.asarray(ses, float)
    return float(vals.mean()), float(np.sqrt(np.sum(ses**2)) / vals.size)


def test_criterion_10_synthetic_economy(tmp_path):
    t = time.perf_counter()
    target_w = mu_worker_of(1.5, -1.0)
    band_ok = hier_ok = delta_ok = 0
    mw_all, d_all = [], []
    for seed in range(10):
        firm, work, deltas = _closed_loop(seed, tmp_path / f"s{seed}")
        mw, sw = _mean_and_se([f["mu_hat"] for f in work], [f["stderr"] for f in work])
        mf, _ = _mean_and_se([f["mu_hat"] for f in firm], [f["stderr"] for f in firm])
        band_ok += abs(mw - target_w) <= 3 * sw
        hier_ok += mw > mf
        good = [d for d in deltas if d["delta"] is not None]
        if len(good) == len(deltas):
            md, sd = _mean_and_se([d["delta"] for d in good], [d["stderr"] for d in good])
            delta_ok += abs(md + 1.0) <= 3 * sd
            d_all.append(md)
        mw_all.append(mw)
    el = time.perf_counter() - t
    ok = band_ok >= 9 and hier_ok >= 9 and delta_ok >= 9
    record(10, ok, el, 300.0,
           f"mu_W within 3 sigma of {target_w}: {band_ok}/10 (mean mu_W {np.mean(mw_all):.3f}); "
           f"mu_W > mu_F: {hier_ok}/10; delta within 3 sigma of -1: {delta_ok}/10 "
           f"(mean delta {np.mean(d_all) if d_all else float('nan'):.3f})")


# 11 --------------------------------------------------------------------------------


SUBCOMMANDS = ("equilibrium", "stationary", "simulate", "superstat", "gen", "fit", "mcarlo", "pipeline")


def _tree(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_determinism(tmp_path, capsys):
    t = time.perf_counter()
    base = ROOT / "demos" / "scenarios" / "full.toml"
    assert main(["gen", "--config", str(base), "--out", str(tmp_path / "panel")]) == 0
    fit_cfg = tmp_path / "fit.toml"
    fit_cfg.write_text(
        base.read_text().replace("[fit]\n", f'[fit]\ninput = "{tmp_path / "panel" / "panel.csv"}"\n')
    )
    mismatched = []
    for cmd in SUBCOMMANDS:
        cfg = fit_cfg if cmd == "fit" else base
        trees = []
        for run in ("a", "b"):
            out = tmp_path / cmd / run
            assert main([cmd, "--config", str(cfg), "--seed", "20240501", "--out", str(out)]) == 0
            trees.append(_tree(out))
        if trees[0] != trees[1] or not trees[0]:
            mismatched.append(cmd)
    capsys.readouterr()
    el = time.perf_counter() - t
    record(11, not mismatched, el, 60.0,
           f"{len(SUBCOMMANDS)} subcommands rerun" + (f"; differing: {mismatched}" if mismatched else ", all byte-identical"))
