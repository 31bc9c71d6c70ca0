"""Jump Markov process for firm productivity.

A firm at productivity level c moves to c+1 at rate w+(c) = a+ c^alpha and to
c-1 at rate w-(c) = a- c^alpha.  New firms enter at c = 1 with rate p and a
firm leaving c = 1 downward exits.  The expected occupancy n(c, t) obeys the
master equation

    dn(c)/dt = w+(c-1) n(c-1) + w-(c+1) n(c+1) - (w+(c) + w-(c)) n(c) + p [c == 1].

The stationary occupancy is the product n(c) = n(1) prod_{j<c} w+(j)/w-(j+1)
with w-(1) n(1) = p.  For power rates that is n(1) r^(c-1) c^(-alpha) with
r = a+/a-, a power law with an exponential cut-off at c* = 1/(1 - r).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from numpy.typing import NDArray
from scipy import optimize

from ._quadrature import integrate_halfline

__all__ = [
    "MarkovConfig",
    "PopulationExplosionError",
    "TruncationWarning",
    "StationaryState",
    "PowerLawProfile",
    "AggregateIntegrals",
    "SimulationResult",
    "ReplicaSummary",
    "stationary_solution",
    "stationary_powerlaw_approx",
    "master_residual",
    "aggregate_integrals",
    "simulate",
    "simulate_replicas",
    "replica_seeds",
    "count_exponent",
    "tail_exponents",
    "write_counts_csv",
]


class PopulationExplosionError(ValueError):
    """a+ >= a-: no normalizable stationary state exists."""


class TruncationWarning(UserWarning):
    """c_max is too small relative to the cut-off c*."""


@dataclass(frozen=True)
class MarkovConfig:
    """Rates of the productivity jump process.

    ``rate_exponent`` is the power of c in the transition rates.
    ``city_constraint`` additionally requires n(1)/C_(alpha) = p, the extra
    assumption of the city-size variant of the model; off by default.
    """

    a_plus: float
    a_minus: float
    rate_exponent: float
    entry_rate: float
    c_max: int
    city_constraint: bool = False

    def __post_init__(self):
        if not (self.a_plus > 0 and self.a_minus > 0):
            raise ValueError("a_plus and a_minus must be positive")
        if self.entry_rate < 0:
            raise ValueError("entry_rate must be non-negative")
        if self.rate_exponent < 1:
            raise ValueError("rate_exponent must be >= 1")
        if int(self.c_max) != self.c_max or self.c_max < 1:
            raise ValueError("c_max must be a positive integer")
        object.__setattr__(self, "c_max", int(self.c_max))
        if self.a_plus >= self.a_minus:
            raise PopulationExplosionError(
                f"a_plus={self.a_plus} >= a_minus={self.a_minus}: the population "
                "drifts upward without bound and has no stationary state"
            )
        if self.city_constraint and not math.isclose(
            self.cutoff_ratio, self.entry_rate, rel_tol=1e-12
        ):
            raise ValueError(
                f"city constraint n(1)/C = p violated: 1 - a+/a- = {self.cutoff_ratio}, "
                f"p = {self.entry_rate}"
            )

    @classmethod
    def from_cutoff(
        cls,
        rate_exponent: float,
        cutoff_ratio: float,
        *,
        a_minus: float = 1.0,
        entry_rate: float = 1.0,
        c_max: int | None = None,
        city_constraint: bool = False,
    ) -> MarkovConfig:
        """Build a config whose cut-off ratio n(1)/C_(alpha) equals ``cutoff_ratio``."""
        if not 0 < cutoff_ratio < 1:
            raise ValueError("cutoff_ratio must lie in (0, 1)")
        if c_max is None:
            c_max = int(math.ceil(10.0 / cutoff_ratio))
        return cls(
            a_plus=a_minus * (1.0 - cutoff_ratio),
            a_minus=a_minus,
            rate_exponent=rate_exponent,
            entry_rate=entry_rate,
            c_max=c_max,
            city_constraint=city_constraint,
        )

    @property
    def rate_ratio(self) -> float:
        return self.a_plus / self.a_minus

    @property
    def cutoff_ratio(self) -> float:
        """n(1)/C_(alpha) = 1 - a+/a-."""
        return (self.a_minus - self.a_plus) / self.a_minus

    @property
    def c_star(self) -> float:
        return 1.0 / self.cutoff_ratio

    def w_plus(self, c):
        return self.a_plus * np.asarray(c, dtype=float) ** self.rate_exponent

    def w_minus(self, c):
        return self.a_minus * np.asarray(c, dtype=float) ** self.rate_exponent


@dataclass(frozen=True, eq=False)
class StationaryState:
    c: NDArray[np.int64] = field(repr=False)
    counts: NDArray[np.float64] = field(repr=False)
    total_firms: float
    aggregate_index: float
    log_counts: NDArray[np.float64] | None = field(default=None, repr=False)
    tail_mass: float = 0.0

    @classmethod
    def from_counts(cls, counts) -> StationaryState:
        counts = np.asarray(counts, dtype=float)
        c = np.arange(1, counts.size + 1)
        return cls(c, counts, float(counts.sum()), float((c * counts).sum()))


def stationary_solution(cfg: MarkovConfig) -> StationaryState:
    """Exact stationary occupancy from the product formula, accumulated in log space."""
    if cfg.entry_rate <= 0:
        raise ValueError("stationary occupancy needs a positive entry rate")
    c = np.arange(1, cfg.c_max + 1)
    log_n1 = math.log(cfg.entry_rate) - math.log(cfg.a_minus)  # w-(1) = a-
    # log of w+(j) / w-(j+1), j = 1..c_max-1
    j = c[:-1].astype(float)
    steps = (
        math.log(cfg.a_plus)
        + cfg.rate_exponent * np.log(j)
        - math.log(cfg.a_minus)
        - cfg.rate_exponent * np.log(j + 1.0)
    )
    log_n = np.empty(cfg.c_max)
    log_n[0] = log_n1
    log_n[1:] = log_n1 + np.cumsum(steps)
    n = np.exp(log_n)

    r = cfg.rate_ratio
    tail = n[-1] * r / (1.0 - r)
    if cfg.c_max < 10 * cfg.c_star * (1 - 1e-9):
        warnings.warn(
            f"c_max={cfg.c_max} < 10 c* = {10 * cfg.c_star:.4g}; "
            f"truncated tail mass ~ {tail:.3g} firms",
            TruncationWarning,
            stacklevel=2,
        )
    return StationaryState(
        c=c,
        counts=n,
        total_firms=float(n.sum()),
        aggregate_index=float((c * n).sum()),
        log_counts=log_n,
        tail_mass=float(tail),
    )


def master_residual(cfg: MarkovConfig, state: StationaryState | NDArray) -> NDArray[np.float64]:
    """Right-hand side of the master equation at c = 1..c_max-1.

    The last level is excluded because its upward neighbour is outside the
    truncated state space.
    """
    n = state.counts if isinstance(state, StationaryState) else np.asarray(state, dtype=float)
    if n.size != cfg.c_max:
        raise ValueError(f"state has {n.size} levels, config has c_max={cfg.c_max}")
    c = np.arange(1, cfg.c_max + 1, dtype=float)
    up = cfg.w_plus(c) * n
    down = cfg.w_minus(c) * n
    res = -(up + down)
    res[1:] += up[:-1]
    res[:-1] += down[1:]
    res[0] += cfg.entry_rate
    return res[:-1]


@dataclass(frozen=True)
class PowerLawProfile:
    """n(c) ~ amplitude * c^exponent * exp(-c / c_star)."""

    exponent: float
    c_star: float
    amplitude: float
    cutoff_ratio: float
    max_rel_deviation: float
    window: tuple[float, float]

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        cut = 0.0 if math.isinf(self.c_star) else 1.0 / self.c_star
        return self.amplitude * c**self.exponent * np.exp(-c * cut)


def stationary_powerlaw_approx(cfg: MarkovConfig) -> PowerLawProfile:
    """Closed-form power law with exponential cut-off.

    c* is taken from the exact stationary state as C_(alpha)/n(1), including
    the geometric tail beyond c_max. The deviation from the exact solution is
    reported over 10 <= c <= c*/10 (clipped to c_max).
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        state = stationary_solution(cfg)
    n, c = state.counts, state.c.astype(float)
    n1 = n[0]
    r = cfg.rate_ratio
    # c^alpha n(c) = n1 r^(c-1) for power rates, so the tail of C_(alpha) is geometric
    c_alpha = float(np.sum(c**cfg.rate_exponent * n)) + c[-1] ** cfg.rate_exponent * n[-1] * r / (1 - r)
    eps = n1 / c_alpha
    c_star = 1.0 / eps
    amp = n1 / (1.0 - eps)
    lo, hi = 10.0, min(c_star / 10.0, float(cfg.c_max))
    profile = PowerLawProfile(-cfg.rate_exponent, c_star, amp, eps, math.nan, (lo, hi))
    sel = (c >= lo) & (c <= hi)
    dev = float(np.max(np.abs(profile(c[sel]) / n[sel] - 1.0))) if sel.any() else math.nan
    return PowerLawProfile(-cfg.rate_exponent, c_star, amp, eps, dev, (lo, hi))


@dataclass(frozen=True)
class AggregateIntegrals:
    total_firms: float
    aggregate_index: float
    firms_finite_in_limit: bool
    index_finite_in_limit: bool


def _bose_integrand(power, eps, t):
    if t == 0.0:
        return 0.0
    if t > 1.0:
        em = math.exp(-t)
        return t**power * em / (1.0 - em + eps * em)
    return t**power / (math.expm1(t) + eps)


def aggregate_integrals(alpha: float, cutoff_ratio: float, n1: float = 1.0) -> AggregateIntegrals:
    """K and C as gamma-weighted integrals of t^(s-1) / (e^t - 1 + n(1)/C).

    K uses s = alpha and C uses s = alpha - 1. With ``cutoff_ratio == 0`` the
    integrals diverge for alpha <= 1 (K) and alpha <= 2 (C); those values are
    returned as ``inf`` and flagged rather than raised.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if cutoff_ratio < 0:
        raise ValueError("cutoff_ratio must be non-negative")
    eps = float(cutoff_ratio)
    scale = eps if eps > 0 else 1.0

    def gamma_integral(s):
        if eps == 0 and s <= 1:
            return math.inf
        v, _ = integrate_halfline(
            lambda t: _bose_integrand(s - 1.0, eps, t), 0.0, scale, kink=1.0
        )
        return v / math.gamma(s)

    k = n1 * gamma_integral(alpha)
    c = n1 * gamma_integral(alpha - 1.0)
    return AggregateIntegrals(k, c, alpha > 1, alpha > 2)


# --------------------------------------------------------------------------
# stochastic simulation
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _fenwick_add(tree, i, v):
    m = tree.size - 1
    while i <= m:
        tree[i] += v
        i += i & (-i)


@numba.njit(cache=True)
def _fenwick_find(tree, target, top_bit):
    # smallest index i with prefix_sum(i) > target
    pos = 0
    step = top_bit
    m = tree.size - 1
    while step > 0:
        nxt = pos + step
        if nxt <= m and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step >>= 1
    return pos + 1


@numba.njit(cache=True)
def _gillespie(n0, a_plus, a_minus, alpha, p, t_end, t_warm, seed, n_checkpoints):
    np.random.seed(seed)
    c_max = n0.size - 1
    n = n0.copy()
    level_rate = np.zeros(c_max + 1)
    tree = np.zeros(c_max + 1)
    total = 0.0
    for c in range(1, c_max + 1):
        level_rate[c] = c**alpha
        if n[c] > 0:
            _fenwick_add(tree, c, level_rate[c] * n[c])
            total += level_rate[c] * n[c]
    top_bit = 1
    while top_bit * 2 <= c_max:
        top_bit *= 2

    area = np.zeros(c_max + 1)
    last = np.zeros(c_max + 1)
    for c in range(c_max + 1):
        last[c] = t_warm
    ck_times = np.linspace(0.0, t_end, n_checkpoints)
    ck_firms = np.zeros(n_checkpoints)
    ck_next = 0
    firms = 0
    for c in range(1, c_max + 1):
        firms += n[c]

    a_sum = a_plus + a_minus
    p_up = a_plus / a_sum
    t = 0.0
    events = 0
    entries = 0
    exits = 0
    while True:
        rate = p + a_sum * total
        if rate <= 0.0:
            break
        dt = -math.log(1.0 - np.random.random()) / rate
        while ck_next < n_checkpoints and ck_times[ck_next] <= t + dt:
            if ck_times[ck_next] <= t_end:
                ck_firms[ck_next] = firms
            ck_next += 1
        if t + dt > t_end:
            break
        t += dt
        events += 1
        u = np.random.random() * rate
        if u < p:
            src = 0
            dst = 1
        else:
            target = (u - p) / a_sum
            src = _fenwick_find(tree, target, top_bit)
            if src > c_max:
                src = c_max
            while n[src] == 0 and src > 1:
                src -= 1
            while n[src] == 0 and src < c_max:
                src += 1
            if np.random.random() < p_up:
                dst = src + 1
                if dst > c_max:
                    continue  # reflecting upper boundary
            else:
                dst = src - 1
        for lvl in (src, dst):
            if lvl >= 1 and t > t_warm:
                area[lvl] += n[lvl] * (t - last[lvl])
                last[lvl] = t
        if src >= 1:
            n[src] -= 1
            _fenwick_add(tree, src, -level_rate[src])
            total -= level_rate[src]
        else:
            entries += 1
        if dst >= 1:
            n[dst] += 1
            _fenwick_add(tree, dst, level_rate[dst])
            total += level_rate[dst]
        else:
            exits += 1
        firms += (dst >= 1) - (src >= 1)
        if firms == 0:
            total = 0.0
    while ck_next < n_checkpoints:
        ck_firms[ck_next] = firms
        ck_next += 1
    for c in range(1, c_max + 1):
        area[c] += n[c] * (t_end - last[c])
    return area[1:] / (t_end - t_warm), n[1:], events, entries, exits, ck_times, ck_firms


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Time-averaged occupancy after warm-up plus a trajectory summary."""

    counts: NDArray[np.float64] = field(repr=False)
    final_counts: NDArray[np.int64] = field(repr=False)
    events: int
    entries: int
    exits: int
    horizon: float
    warmup: float
    checkpoint_times: NDArray[np.float64] = field(repr=False)
    checkpoint_firms: NDArray[np.float64] = field(repr=False)

    @property
    def state(self) -> StationaryState:
        return StationaryState.from_counts(self.counts)

    def summary(self) -> dict:
        return {
            "events": int(self.events),
            "entries": int(self.entries),
            "exits": int(self.exits),
            "horizon": float(self.horizon),
            "warmup": float(self.warmup),
            "final_firms": int(self.final_counts.sum()),
            "mean_firms": float(self.counts.sum()),
            "checkpoint_firms": [float(x) for x in self.checkpoint_firms],
        }


def simulate(
    cfg: MarkovConfig,
    horizon: float,
    seed: int,
    *,
    warmup_fraction: float = 0.2,
    initial: NDArray | None = None,
    n_checkpoints: int = 11,
) -> SimulationResult:
    """Exact event-driven simulation of the firm population.

    Each step draws an exponential waiting time from the total rate
    p + (a+ + a-) sum_c c^alpha n(c) and picks entry or a level with
    probability proportional to its rate.  An up-move from c_max is
    suppressed (reflecting boundary).  Occupancies are time-averaged over
    ``[warmup_fraction * horizon, horizon]``.

    Starting from an empty economy, firms that wander up to c ~ c* need a
    time of order 2 ln c* to come back down, so the warm-up should exceed
    that; shorter warm-ups leave the low levels measurably under-occupied.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not 0 <= warmup_fraction < 1:
        raise ValueError("warmup_fraction must lie in [0, 1)")
    n0 = np.zeros(cfg.c_max + 1, dtype=np.int64)
    if initial is not None:
        initial = np.asarray(initial, dtype=np.int64)
        if initial.size != cfg.c_max or np.any(initial < 0):
            raise ValueError("initial occupancy must have c_max non-negative entries")
        n0[1:] = initial
    t_warm = warmup_fraction * horizon
    seed32 = int(seed) % (2**32)
    avg, final, events, entries, exits, ck_t, ck_k = _gillespie(
        n0,
        float(cfg.a_plus),
        float(cfg.a_minus),
        float(cfg.rate_exponent),
        float(cfg.entry_rate),
        float(horizon),
        float(t_warm),
        seed32,
        n_checkpoints,
    )
    return SimulationResult(avg, final, int(events), int(entries), int(exits), float(horizon), t_warm, ck_t, ck_k)


def replica_seeds(seed: int, n_replicas: int) -> list[int]:
    """Per-replica seeds: ``SeedSequence(seed).spawn(n)``, first 32-bit word of each child."""
    children = np.random.SeedSequence(seed).spawn(n_replicas)
    return [int(ch.generate_state(1, dtype=np.uint32)[0]) for ch in children]


@dataclass(frozen=True, eq=False)
class ReplicaSummary:
    mean: NDArray[np.float64] = field(repr=False)
    stderr: NDArray[np.float64] = field(repr=False)
    replicas: list[SimulationResult] = field(repr=False)

    @property
    def events(self) -> int:
        return sum(r.events for r in self.replicas)


def simulate_replicas(
    cfg: MarkovConfig, horizon: float, seed: int, n_replicas: int, **kwargs
) -> ReplicaSummary:
    """Independent replicas folded in seed order into a mean and standard error per level."""
    if n_replicas < 2:
        raise ValueError("need at least two replicas for a standard error")
    runs = [simulate(cfg, horizon, s, **kwargs) for s in replica_seeds(seed, n_replicas)]
    stack = np.stack([r.counts for r in runs])
    mean = stack.mean(axis=0)
    se = stack.std(axis=0, ddof=1) / math.sqrt(n_replicas)
    return ReplicaSummary(mean, se, runs)


# --------------------------------------------------------------------------
# tail exponents of occupancy profiles
# --------------------------------------------------------------------------


def count_exponent(counts, lo: int, hi: int) -> float:
    """Maximum-likelihood exponent of n(c) ~ c^(-alpha) on the integer window [lo, hi].

    Treats the counts as weights of a discrete power law truncated to the
    window (a Hill-type estimator for occupancy profiles).
    """
    counts = np.asarray(counts, dtype=float)
    c = np.arange(lo, hi + 1, dtype=float)
    w = counts[lo - 1 : hi]
    if w.sum() <= 0:
        raise ValueError("no mass in the fitting window")
    logc = np.log(c)
    mean_log = float(np.sum(w * logc) / w.sum())

    def nll(a):
        return a * mean_log + np.log(np.sum(np.exp(-a * (logc - logc[0])))) - a * logc[0]

    res = optimize.minimize_scalar(nll, bounds=(0.01, 20.0), method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def tail_exponents(counts, lo: int, hi: int) -> dict[str, float]:
    """Occupancy exponent alpha plus the cumulative indices it implies.

    Firm-weighted: P_>(c) ~ c^-(alpha - 1), the mu = alpha - 1 relation.
    Size-weighted (each firm weighted by c): c n(c) ~ c^(1 - alpha), index alpha - 2.
    """
    a = count_exponent(counts, lo, hi)
    return {"count_exponent": a, "firm_weighted_index": a - 1.0, "size_weighted_index": a - 2.0}


def write_counts_csv(path, counts) -> None:
    """Two-column CSV (c, count)."""
    counts = np.asarray(counts, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write("c,count\n")
        for c, v in enumerate(counts, start=1):
            fh.write(f"{c},{float(v)!r}\n")
