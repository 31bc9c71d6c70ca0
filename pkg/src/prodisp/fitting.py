"""Estimating productivity distributions from samples.

Rank-size survival curves, the Hill tail-index estimator (optionally with
per-observation weights), a KS scan for the tail window, and GB2 maximum
likelihood with deterministic multi-starts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, special

from .distributions import GB2Params, gb2_logpdf

__all__ = [
    "InsufficientTailError",
    "ConvergenceError",
    "ParetoFit",
    "StartOutcome",
    "GB2Fit",
    "rank_size",
    "hill_estimator",
    "gb2_mle",
    "gb2_loglik",
    "pareto_index_from_gb2",
    "select_fit_range",
    "write_rank_size_csv",
    "fits_to_json",
]

MIN_TAIL = 30
DEFAULT_TAIL_FRACTION = 0.10
GB2_MIN_N = 100
GB2_GTOL = 1e-8
# final gradient (per observation, log-parameters) accepted as a stationary point
GB2_ACCEPT_GRAD = 1e-6
# a beyond this makes (x/b)^a a step at b: the GB2 has degenerated to a Pareto law
GB2_RIDGE_A = 1e3

# (p, q) pairs for the multi-start seeds; a and b are moment-matched per pair
_START_SHAPES = (
    (1.0, 1.0),
    (0.5, 0.5),
    (2.0, 2.0),
    (1.0, 0.5),
    (0.5, 1.0),
    (2.0, 0.5),
    (0.5, 2.0),
    (4.0, 1.0),
)


class InsufficientTailError(ValueError):
    """Fewer tail observations than the configured floor."""


class ConvergenceError(RuntimeError):
    """No multi-start reached a stationary point of the likelihood.

    When the starts run off along the Pareto ridge (a -> inf, q -> 0 with a*q
    settling) ``ridge_tail_index`` holds the limiting a*q, with an asymptotic
    standard error a*q/sqrt(N); otherwise it is None.
    """

    def __init__(self, message, best=None, starts=(), ridge_tail_index=None, ridge_tail_stderr=None):
        super().__init__(message)
        self.best = best
        self.starts = tuple(starts)
        self.ridge_tail_index = ridge_tail_index
        self.ridge_tail_stderr = ridge_tail_stderr


def _positive(samples: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("samples must be finite and strictly positive")
    return x


# --------------------------------------------------------------------------
# rank-size and Hill
# --------------------------------------------------------------------------


def rank_size(samples: ArrayLike, weights: ArrayLike | None = None):
    """Empirical survival curve: descending c with P_>(c_(i)) = i/N.

    With ``weights`` the cumulative is the share of total weight at or above
    each point. Ties keep their stable sort order.
    """
    x = _positive(samples)
    order = np.argsort(-x, kind="stable")
    c = x[order]
    if weights is None:
        cum = np.arange(1, c.size + 1) / c.size
    else:
        w = np.asarray(weights, dtype=float).ravel()[order]
        if w.shape != c.shape or np.any(w < 0):
            raise ValueError("weights must be non-negative and match samples")
        cum = np.cumsum(w) / w.sum()
        cum[-1] = 1.0
    return c, cum


@dataclass(frozen=True)
class ParetoFit:
    mu_hat: float
    c0_hat: float
    fit_lo: float
    fit_hi: float
    stderr: float
    method: str
    n_tail: int

    def __post_init__(self):
        if not self.mu_hat > 0:
            raise ValueError("mu_hat must be positive")
        if not self.fit_lo < self.fit_hi:
            raise ValueError("fit range must satisfy fit_lo < fit_hi")
        if self.method not in ("hill", "gb2-tail"):
            raise ValueError(f"unknown method {self.method!r}")

    def agrees_with(self, other: ParetoFit, nsigma: float = 3.0) -> bool:
        return abs(self.mu_hat - other.mu_hat) <= nsigma * math.hypot(self.stderr, other.stderr)


def hill_estimator(
    samples: ArrayLike,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    *,
    weights: ArrayLike | None = None,
    min_tail: int = MIN_TAIL,
) -> ParetoFit:
    """Hill estimate from the top ceil(tail_fraction * N) order statistics.

    mu_hat = k / sum_{i<=k} ln(c_(i)/c_(k+1)), stderr = mu_hat / sqrt(k).

    With ``weights`` (e.g. employees per firm for a worker-level index), the
    tail is the top ``tail_fraction`` of total weight, sums are weighted, and
    the standard error uses the Kish effective size of the tail weights.
    """
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    c, _ = rank_size(samples)
    n = c.size
    if weights is None:
        k = math.ceil(tail_fraction * n - 1e-9)
        if k < min_tail or k >= n:
            raise InsufficientTailError(
                f"tail count k={k} below the floor of {min_tail} observations (N={n})"
            )
        thr = c[k]
        mu = k / float(np.sum(np.log(c[:k] / thr)))
        stderr = mu / math.sqrt(k)
        c0 = float(thr * (k / n) ** (1.0 / mu))
        return ParetoFit(mu, c0, float(thr), float(c[0]), stderr, "hill", k)

    x = _positive(samples)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != x.shape or np.any(w <= 0):
        raise ValueError("weights must be positive and match samples")
    order = np.argsort(-x, kind="stable")
    c, w = x[order], w[order]
    total = w.sum()
    cw = np.cumsum(w)
    k = int(np.searchsorted(cw, tail_fraction * total)) + 1
    if k < min_tail or k >= n:
        raise InsufficientTailError(
            f"tail count k={k} below the floor of {min_tail} observations (N={n})"
        )
    thr = c[k]
    wt = w[:k]
    mu = wt.sum() / float(np.sum(wt * np.log(c[:k] / thr)))
    n_eff = wt.sum() ** 2 / float(np.sum(wt**2))
    c0 = float(thr * (wt.sum() / total) ** (1.0 / mu))
    return ParetoFit(mu, c0, float(thr), float(c[0]), mu / math.sqrt(n_eff), "hill", k)


def select_fit_range(
    samples: ArrayLike, *, n_candidates: int = 60, min_tail: int = MIN_TAIL
) -> tuple[float, float]:
    """Lower cutoff minimizing the KS distance between the tail and its Pareto fit.

    Candidates are order statistics at log-spaced ranks from ``min_tail`` to N.
    For each cutoff c_lo the index is the continuous MLE with c_lo as scale.
    """
    x = _positive(samples)
    if x.size < GB2_MIN_N:
        raise InsufficientTailError(f"need at least {GB2_MIN_N} observations, got {x.size}")
    c = np.sort(x)[::-1]
    n = c.size
    ranks = np.unique(np.geomspace(min_tail, n, n_candidates).astype(int))
    best = (math.inf, None)
    logc = np.log(c)
    csum = np.cumsum(logc)
    for k in ranks:
        lo = c[k - 1]
        tail_log = csum[k - 1] - k * logc[k - 1]
        if tail_log <= 0:
            continue
        mu = k / tail_log
        # empirical survival among the k tail points vs (c/lo)^-mu
        emp = np.arange(1, k + 1) / k
        model = np.exp(-mu * (logc[:k] - logc[k - 1]))
        ks = max(np.max(np.abs(emp - model)), np.max(np.abs(emp - 1.0 / k - model)))
        if ks < best[0]:
            best = (ks, lo)
    if best[1] is None:
        raise InsufficientTailError(f"no tail window reaches the floor of {min_tail}")
    return float(best[1]), float(c[0])


# --------------------------------------------------------------------------
# GB2 maximum likelihood
# --------------------------------------------------------------------------


def gb2_loglik(params: GB2Params, samples: ArrayLike) -> float:
    a, b, p, q = params.as_array()
    return float(np.sum(gb2_logpdf(_positive(samples), a, b, p, q)))


def _softplus(z):
    return np.logaddexp(0.0, z)


def _mean_ll_grad(theta, logx):
    """Mean log-likelihood and its gradient in log-parameters (log a, log b, log p, log q)."""
    a, b, p, q = np.exp(theta)
    u = logx - math.log(b)
    z = a * u
    sp = _softplus(z)
    s = special.expit(z)
    ll = (
        math.log(a) + a * p * u - logx - special.betaln(p, q) - (p + q) * sp
    ).mean()
    dpq = special.digamma(p + q)
    ga = 1.0 / a + np.mean(p * u - (p + q) * s * u)
    gb = np.mean(-a * p + (p + q) * s * a)  # already times b
    gp = np.mean(z - sp) - special.digamma(p) + dpq
    gq = -special.digamma(q) + dpq - sp.mean()
    grad = np.array([ga * a, gb, gp * p, gq * q])
    return float(ll), grad


def _hessian(theta, logx, h=1e-5):
    H = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        H[:, j] = (_mean_ll_grad(theta + e, logx)[1] - _mean_ll_grad(theta - e, logx)[1]) / (2 * h)
    return 0.5 * (H + H.T)


def _moment_start(logx, p, q):
    var = float(np.var(logx))
    a = math.sqrt((special.polygamma(1, p) + special.polygamma(1, q)) / var)
    b = math.exp(float(np.mean(logx)) - (special.digamma(p) - special.digamma(q)) / a)
    return np.log([a, b, p, q])


@dataclass(frozen=True)
class StartOutcome:
    index: int
    init: tuple[float, float, float, float]
    params: tuple[float, float, float, float] | None
    loglik: float
    grad_norm: float
    converged: bool
    n_iter: int
    ascent_ok: bool
    message: str


@dataclass(frozen=True, eq=False)
class GB2Fit:
    params: GB2Params
    loglik: float
    stderr: tuple[float, float, float, float]
    cov_log: NDArray[np.float64] = field(repr=False)
    n: int
    max_sample: float
    n_above_scale: int
    winner: int
    starts: tuple[StartOutcome, ...] = field(repr=False)

    @property
    def tail_index_stderr(self) -> float:
        # d(aq) = aq (d log a + d log q)
        aq = self.params.tail_index
        v = self.cov_log[0, 0] + self.cov_log[3, 3] + 2 * self.cov_log[0, 3]
        return aq * math.sqrt(max(v, 0.0))

    def report(self) -> dict:
        return {
            "params": asdict(self.params),
            "loglik": self.loglik,
            "stderr": dict(zip("abpq", self.stderr)),
            "n": self.n,
            "winner": self.winner,
            "starts": [asdict(s) for s in self.starts],
        }


def _run_start(index, theta0, logx, gtol):
    trace = []

    def fun(th):
        ll, g = _mean_ll_grad(th, logx)
        if not math.isfinite(ll):
            return math.inf, np.zeros(4)
        return -ll, -g

    def record(th):
        trace.append(_mean_ll_grad(th, logx)[0])

    record(theta0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        res = optimize.minimize(
            fun, theta0, jac=True, method="BFGS", callback=record,
            options={"gtol": gtol, "maxiter": 2000},
        )
        theta = res.x
        ll, g = _mean_ll_grad(theta, logx)
        # Newton polish on the observed information; steps kept only if ll does not drop
        for _ in range(8):
            if not np.all(np.isfinite(g)) or np.max(np.abs(g)) < gtol:
                break
            H = _hessian(theta, logx)
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                break
            cand = theta + step
            ll_c, g_c = _mean_ll_grad(cand, logx)
            if not (math.isfinite(ll_c) and ll_c >= ll):
                break
            theta, ll, g = cand, ll_c, g_c
            trace.append(ll)
    gnorm = float(np.max(np.abs(g))) if np.all(np.isfinite(g)) else math.inf
    finite = math.isfinite(ll) and np.all(np.isfinite(theta)) and np.all(np.abs(theta) < 700)
    params = tuple(float(v) for v in np.exp(theta)) if finite else None
    tr = np.asarray(trace)
    ascent = bool(np.all(np.diff(tr) >= -1e-12 * np.maximum(1.0, np.abs(tr[1:]))))
    return StartOutcome(
        index=index,
        init=tuple(float(v) for v in np.exp(theta0)),
        params=params,
        loglik=ll if finite else -math.inf,
        grad_norm=gnorm,
        converged=bool(finite and gnorm < GB2_ACCEPT_GRAD),
        n_iter=int(res.nit),
        ascent_ok=ascent,
        message=str(res.message),
    ), theta


def gb2_mle(
    samples: ArrayLike, init: GB2Params | None = None, *, gtol: float = GB2_GTOL
) -> GB2Fit:
    """Maximum-likelihood GB2 fit.

    BFGS on log-parameters from eight moment-matched starts (plus ``init`` if
    given, tried first), followed by guarded Newton refinement. The winner is
    the converged start with the highest log-likelihood; ties go to the lowest
    index. Standard errors come from the observed information.
    """
    x = _positive(samples)
    n = x.size
    if n < GB2_MIN_N:
        raise ValueError(f"GB2 fit needs at least {GB2_MIN_N} observations, got {n}")
    logx = np.log(x)
    if float(np.ptp(logx)) == 0.0:
        raise ConvergenceError("degenerate likelihood: all samples are equal")

    thetas = [_moment_start(logx, p, q) for p, q in _START_SHAPES]
    if init is not None:
        thetas.insert(0, np.log(init.as_array()))
    outcomes = []
    best = None
    for i, th0 in enumerate(thetas):
        out, theta = _run_start(i, th0, logx, gtol)
        outcomes.append(out)
        if out.converged and (best is None or out.loglik > best[0].loglik):
            best = (out, theta)
    if best is None:
        finite = [o for o in outcomes if o.params is not None]
        top = max(finite, key=lambda o: o.loglik) if finite else None
        ridge = se = None
        if top is not None and top.params[0] > GB2_RIDGE_A:
            ridge = top.params[0] * top.params[3]
            se = ridge / math.sqrt(n)
        raise ConvergenceError(
            "no start reached a stationary point of the GB2 likelihood"
            + (f"; starts diverge along the Pareto ridge with a*q -> {ridge:.6g}" if ridge else ""),
            best=top, starts=outcomes, ridge_tail_index=ridge, ridge_tail_stderr=se,
        )
    out, theta = best
    H = _hessian(theta, logx) * n
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)
    params = GB2Params(*out.params)
    se = tuple(float(v) for v in params.as_array() * np.sqrt(np.abs(np.diag(cov))))
    return GB2Fit(
        params=params,
        loglik=out.loglik * n,
        stderr=se,
        cov_log=cov,
        n=n,
        max_sample=float(x.max()),
        n_above_scale=int(np.count_nonzero(x >= params.b)),
        winner=out.index,
        starts=tuple(outcomes),
    )


def pareto_index_from_gb2(fit: GB2Fit | GB2Params, max_sample: float | None = None) -> ParetoFit:
    """Upper-tail index a*q of a GB2 fit, reported over [b, max sample]."""
    if isinstance(fit, GB2Fit):
        params, hi, se, n_tail = fit.params, fit.max_sample, fit.tail_index_stderr, fit.n_above_scale
    else:
        params, hi, se, n_tail = fit, max_sample, math.nan, 0
    if hi is None or not hi > params.b:
        hi = params.b * 10.0
    return ParetoFit(params.tail_index, params.b, params.b, float(hi), se, "gb2-tail", n_tail)


# --------------------------------------------------------------------------
# emitters
# --------------------------------------------------------------------------


def write_rank_size_csv(path, samples: ArrayLike, weights: ArrayLike | None = None) -> Path:
    c, cum = rank_size(samples, weights)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["c", "cumulative"])
        for ci, pi in zip(c, cum):
            w.writerow([repr(float(ci)), repr(float(pi))])
    return path


def fits_to_json(fits) -> str:
    """Serialize ParetoFit / GB2Params / GB2Fit objects to a JSON array."""
    out = []
    for f in fits:
        if isinstance(f, GB2Fit):
            out.append({"type": "gb2", **f.report()})
        elif isinstance(f, GB2Params):
            out.append({"type": "gb2-params", **asdict(f)})
        else:
            out.append({"type": "pareto", **asdict(f)})
    return json.dumps(out, indent=2, sort_keys=True, allow_nan=True)
