"""Bernoulli site models for prime-like sets, gap ratios, and counts of
integers with a fixed number of prime factors.

A site n >= 3 is occupied with probability 1/f(n); runs of the model measure
the normalized gap statistic (S_{k+1} - S_k) / (f(S_k) log S_k).  The rest of
the module counts omega-level sets exactly and scans short windows for
integers with unusually many prime factors, recording hits and misses alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import BudgetExceededError
from .primes_core import build_prime_table, factor_window
from .reporting import write_csv

RATE_NAMES = ("log", "semiprime", "custom")
WINDOW_VARIANTS = ("A-omega", "B-Omega", "weak")
COUNT_BUDGET_MAX = 10**7


def loglog(v: float) -> float:
    return math.log(math.log(v))


@dataclass(frozen=True)
class CramerConfig:
    """One simulation setup: rate function, range, trial count, seed.

    rate "log" is f(n) = log n; "semiprime" is f(n) = log n / (loglog n)^(j-1);
    "custom" interpolates the given (n, f(n)) knots linearly and holds the end
    values flat outside their range.  scale multiplies f pointwise.
    """

    rate: str = "log"
    j: int = 1
    custom: Optional[tuple[tuple[float, float], ...]] = None
    scale: float = 1.0
    N: int = 10**5
    trials: int = 100
    seed: int = 0
    warmup: Optional[int] = None

    def __post_init__(self):
        if self.rate not in RATE_NAMES:
            raise ValueError(f"unknown rate {self.rate!r}; expected one of {RATE_NAMES}")
        if self.rate == "semiprime" and self.j < 1:
            raise ValueError("semiprime rate needs j >= 1")
        if self.rate == "custom":
            if not self.custom:
                raise ValueError("custom rate needs at least one (n, f) knot")
            ns = [p[0] for p in self.custom]
            if ns != sorted(ns):
                raise ValueError("custom knots must have increasing n")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.N < 10:
            raise ValueError("need N >= 10")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        w = self.warmup_index()
        if w < 3:
            raise ValueError("warmup must be >= 3")
        probe = self.rate_values(np.array([float(w), float(self.N)]))
        if not np.all(probe > 1.0):
            raise ValueError("rate function must exceed 1 from the warmup index on")

    def warmup_index(self) -> int:
        if self.warmup is not None:
            return self.warmup
        return max(3, int(round(self.N**0.25)))

    def rate_values(self, ns: np.ndarray) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.float64)
        if self.rate == "log":
            vals = np.log(ns)
        elif self.rate == "semiprime":
            vals = np.log(ns) / np.log(np.log(ns)) ** (self.j - 1)
        else:
            knots_n = np.array([p[0] for p in self.custom], dtype=np.float64)
            knots_f = np.array([p[1] for p in self.custom], dtype=np.float64)
            vals = np.interp(ns, knots_n, knots_f)
        return vals * self.scale


@dataclass(frozen=True)
class GapReport:
    seed: int
    trials: int
    warmup: int
    max_ratios: tuple[float, ...]
    mean_gap: float
    gap_count: int
    hist_edges: tuple[float, ...]
    hist_counts: tuple[int, ...]
    empty_trials: tuple[int, ...]
    gap_rows: Optional[tuple] = None

    def empty(self) -> bool:
        return self.gap_count == 0

    def fraction_below(self, cutoff: float) -> float:
        vals = [r for r in self.max_ratios if not math.isnan(r)]
        if not vals:
            return 0.0
        return sum(1 for r in vals if r <= cutoff) / len(vals)


def simulate_gaps(config: CramerConfig, keep_gaps: bool = False) -> GapReport:
    """Run the Bernoulli model and measure normalized success gaps.

    Each trial draws from its own generator seeded with seed XOR trial-index,
    so trial results never depend on execution order.  Gaps are recorded only
    from successes at or beyond the warmup index.
    """
    ns = np.arange(3, config.N + 1, dtype=np.int64)
    fvals = config.rate_values(ns)
    warmup = config.warmup_index()
    max_ratios = []
    all_ratios = []
    all_gaps = []
    empty = []
    rows = [] if keep_gaps else None
    for trial in range(config.trials):
        rng = np.random.Generator(np.random.PCG64(config.seed ^ trial))
        hits = rng.random(len(ns)) < 1.0 / fvals
        S = ns[hits]
        if len(S) < 2:
            empty.append(trial)
            max_ratios.append(float("nan"))
            continue
        f_at = fvals[hits][:-1]
        gaps = np.diff(S).astype(np.float64)
        ratios = gaps / (f_at * np.log(S[:-1]))
        mask = S[:-1] >= warmup
        if not mask.any():
            empty.append(trial)
            max_ratios.append(float("nan"))
            continue
        kept_ratios = ratios[mask]
        max_ratios.append(float(kept_ratios.max()))
        all_ratios.append(kept_ratios)
        all_gaps.append(gaps[mask])
        if keep_gaps:
            s_kept = S[:-1][mask]
            g_kept = gaps[mask]
            for idx in range(len(s_kept)):
                rows.append((trial, idx + 1, int(s_kept[idx]),
                             float(g_kept[idx]), float(kept_ratios[idx])))
    if all_ratios:
        pooled = np.concatenate(all_ratios)
        pooled_gaps = np.concatenate(all_gaps)
        counts, edges = np.histogram(pooled, bins=60)
        mean_gap = float(pooled_gaps.mean())
        gap_count = int(len(pooled))
    else:
        counts, edges = np.array([], dtype=np.int64), np.array([0.0, 1.0])
        mean_gap = float("nan")
        gap_count = 0
    return GapReport(
        seed=config.seed,
        trials=config.trials,
        warmup=warmup,
        max_ratios=tuple(max_ratios),
        mean_gap=mean_gap,
        gap_count=gap_count,
        hist_edges=tuple(float(e) for e in edges),
        hist_counts=tuple(int(c) for c in counts),
        empty_trials=tuple(empty),
        gap_rows=tuple(rows) if keep_gaps else None,
    )


# --- exact omega-level counts ---

@lru_cache(maxsize=8)
def _omega_histogram(x: int) -> tuple[int, ...]:
    table = build_prime_table(math.isqrt(x) + 1)
    window = factor_window(2, x, table)
    return tuple(int(c) for c in np.bincount(window.omega))


def count_pi_k(x: int, k: int) -> int:
    """Number of 2 <= n <= x with exactly k distinct prime factors."""
    if x < 2:
        raise ValueError("need x >= 2")
    if x > COUNT_BUDGET_MAX:
        raise BudgetExceededError(f"omega counting is capped at x <= {COUNT_BUDGET_MAX}")
    if k < 1:
        raise ValueError("need k >= 1")
    hist = _omega_histogram(x)
    return hist[k] if k < len(hist) else 0


def pi_k_lower_bound_shape(x: int, k: int) -> float:
    """(x / log x) * (loglog x)^(k-1) / (k-1)!, the growth shape without its
    implied constant."""
    if x < 3:
        raise ValueError("need x >= 3")
    return x / math.log(x) * loglog(x) ** (k - 1) / math.factorial(k - 1)


def density_ratio(x: int, k: int) -> float:
    """Exact count divided by the lower-bound shape."""
    return count_pi_k(x, k) / pi_k_lower_bound_shape(x, k)


def density_profile(x_grid, k: Optional[int] = None) -> list[tuple[int, int, int, float, float]]:
    """Rows (x, k, count, bound shape, ratio); k defaults to ceil(loglog x)."""
    rows = []
    for x in x_grid:
        kk = k if k is not None else max(1, math.ceil(loglog(x)))
        cnt = count_pi_k(x, kk)
        shape = pi_k_lower_bound_shape(x, kk)
        rows.append((int(x), kk, cnt, shape, cnt / shape))
    return rows


# --- window searches for prime-factor-rich integers ---

@dataclass(frozen=True)
class WindowWitness:
    x: int
    variant: str
    params: dict
    lo: int
    hi: int
    witness: Optional[int]
    value: Optional[int]
    threshold: Optional[float]


def _trial_omegas(m: int) -> tuple[int, int]:
    small = 0
    total = 0
    d = 2
    mm = m
    while d * d <= mm:
        if mm % d == 0:
            small += 1
            while mm % d == 0:
                total += 1
                mm //= d
        d += 1
    if mm > 1:
        small += 1
        total += 1
    return small, total


def window_search(
    x: int,
    variant: str,
    epsilon: Optional[float] = None,
    C: Optional[float] = None,
    C0: Optional[float] = None,
    d: Optional[float] = None,
) -> WindowWitness:
    """Largest n in the variant's trailing window with enough prime factors.

    A-omega / B-Omega use the window (x - C log x sqrt(loglog x), x] and the
    threshold epsilon * loglog n on omega / Omega.  weak uses the window
    (x - (log(x/2))^d, x] and the threshold C0 * loglog n / logloglog n.
    A missing witness is an ordinary outcome and is returned as None with the
    scanned window recorded.
    """
    if variant not in WINDOW_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {WINDOW_VARIANTS}")
    if x < 100:
        raise ValueError("need x >= 100")
    if variant in ("A-omega", "B-Omega"):
        if epsilon is None or C is None:
            raise ValueError("A-omega/B-Omega need epsilon and C")
        params = {"epsilon": epsilon, "C": C}
        width = C * math.log(x) * math.sqrt(loglog(x))
    else:
        if C0 is None or d is None:
            raise ValueError("weak variant needs C0 and d")
        params = {"C0": C0, "d": d}
        width = math.log(x / 2.0) ** d
    if width < 1:
        raise ValueError(f"window width {width:.3g} is below one integer")
    lo = max(2, int(math.floor(x - width)) + 1)
    if variant == "weak":
        lo = max(lo, 16)  # logloglog must be positive
    hi = x
    if hi - lo > COUNT_BUDGET_MAX:
        raise BudgetExceededError("window too wide to factor")
    table = build_prime_table(math.isqrt(hi) + 1)
    window = factor_window(lo, hi, table)
    witness = None
    value = None
    threshold = None
    for n in range(hi, lo - 1, -1):
        ll = loglog(n)
        if variant == "A-omega":
            thresh = epsilon * ll
            got = int(window.omega[n - lo])
        elif variant == "B-Omega":
            thresh = epsilon * ll
            got = int(window.big_omega[n - lo])
        else:
            thresh = C0 * ll / math.log(ll)
            got = int(window.omega[n - lo])
        if got >= thresh:
            small, total = _trial_omegas(n)
            check = total if variant == "B-Omega" else small
            if check != got:
                raise RuntimeError(f"window factorization disagrees with trial division at {n}")
            witness, value, threshold = n, got, thresh
            break
    return WindowWitness(x=x, variant=variant, params=params, lo=lo, hi=hi,
                         witness=witness, value=value, threshold=threshold)


# --- the downward-shift refuter ---

@dataclass(frozen=True)
class RefuterResult:
    n: int
    delta: float
    k: Optional[int]
    omega_value: Optional[int]
    threshold: Optional[float]
    searched_up_to: int
    chain: Optional[dict] = None


def erdos_style_refuter(
    n: int,
    delta: float,
    budget: int = 10**5,
    C0: Optional[float] = None,
    d: Optional[float] = None,
) -> RefuterResult:
    """First k >= 3 with omega(n-k) > (1+delta) log k / loglog k, if any.

    With C0 and d supplied, also runs the window search at x = n and records
    the two sides of the comparison chain linking the window threshold to the
    gap threshold at the implied k.
    """
    if n < 10**6:
        raise ValueError("need n >= 10^6 so the iterated logs are stable")
    if delta <= 0:
        raise ValueError("delta must be positive")
    k_hi = min(budget, n - 2)
    lo = n - k_hi
    table = build_prime_table(math.isqrt(n) + 1)
    window = factor_window(lo, n - 3, table)
    found_k = None
    found_omega = None
    found_threshold = None
    for k in range(3, k_hi + 1):
        m = n - k
        om = int(window.omega[m - lo])
        thresh = (1.0 + delta) * math.log(k) / loglog(k)
        if om > thresh:
            found_k, found_omega, found_threshold = k, om, thresh
            break
    chain = None
    if C0 is not None and d is not None:
        wit = window_search(n, "weak", C0=C0, d=d)
        if wit.witness is not None and n - wit.witness >= 3:
            k_w = n - wit.witness
            lhs = C0 * loglog(wit.witness) / math.log(loglog(wit.witness))
            rhs = (1.0 + (C0 / d - 1.0)) * math.log(k_w) / loglog(k_w)
            chain = {
                "witness": wit.witness,
                "k": k_w,
                "window_threshold": lhs,
                "gap_threshold": rhs,
                "chain_holds": lhs >= rhs,
            }
        else:
            chain = {"witness": wit.witness, "k": None,
                     "window_threshold": None, "gap_threshold": None,
                     "chain_holds": None}
    return RefuterResult(n=n, delta=delta, k=found_k, omega_value=found_omega,
                         threshold=found_threshold, searched_up_to=k_hi, chain=chain)


# --- emitters ---

def write_gaps_csv(report: GapReport, path) -> None:
    if report.gap_rows is None:
        raise ValueError("report was built without keep_gaps=True")
    write_csv(path, ["trial", "k", "S_k", "gap", "ratio"], report.gap_rows)


def write_pik_csv(rows, path) -> None:
    write_csv(path, ["x", "k", "count", "lower_bound", "ratio"], rows)


def write_witness_csv(witnesses, path) -> None:
    rows = []
    for w in witnesses:
        params = ";".join(f"{key}={val}" for key, val in sorted(w.params.items()))
        rows.append((w.x, w.variant, params,
                     w.witness if w.witness is not None else "none"))
    write_csv(path, ["x", "variant", "params", "witness_or_none"], rows)
