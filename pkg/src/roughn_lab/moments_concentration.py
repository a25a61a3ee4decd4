"""Exact combinatorics for the tail-to-moment reduction.

Stirling tables, the partition sum G with its exponential-formula twin,
the ordered-simplex product rho_r, and full-enumeration moments of
divisor-count sums under a weight table.  Everything here is either exact
integer/rational arithmetic or a finite weighted enumeration; sampling
never enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceededError, NumericFailureError
from .primes_core import PrimeTable, big_omega, build_prime_table, factor_window, factorize
from .reporting import write_csv, write_json
from .sieve_measure import SieveParams, WeightTable, _primes_upto

STIRLING_MAX_S = 64
_SIMPLEX_PRIMES = (2, 3, 5, 7, 11, 13)


# --- Stirling numbers of the second kind ---

@dataclass(frozen=True)
class StirlingTable:
    """Triangular table of exact {s, t} values, 1 <= t <= s <= max_s."""

    max_s: int
    values: tuple[tuple[int, ...], ...]

    def value(self, s: int, t: int) -> int:
        if not 1 <= t <= s <= self.max_s:
            raise ValueError(f"need 1 <= t <= s <= {self.max_s}, got s={s}, t={t}")
        return self.values[s - 1][t - 1]


@lru_cache(maxsize=4)
def build_stirling_table(max_s: int = STIRLING_MAX_S) -> StirlingTable:
    if max_s < 1:
        raise ValueError("max_s must be >= 1")
    rows = [(1,)]
    for s in range(2, max_s + 1):
        prev = rows[-1]
        row = [1]
        for t in range(2, s):
            row.append(t * prev[t - 1] + prev[t - 2])
        row.append(1)
        rows.append(tuple(row))
    return StirlingTable(max_s=max_s, values=tuple(rows))


def stirling2(s: int, t: int) -> int:
    return build_stirling_table().value(s, t)


def stirling_identity_check(s: int, m: int) -> bool:
    """Exact check of sum_{j=1}^{2s} {2s, j} * m!/(m-j)! == m^(2s)."""
    if s < 1 or m < 2 * s:
        raise ValueError(f"need m >= 2s >= 2, got s={s}, m={m}")
    lhs = sum(stirling2(2 * s, j) * math.perm(m, j) for j in range(1, 2 * s + 1))
    return lhs == m ** (2 * s)


def stirling_bound_kappa(s_lo: int = 10, s_hi: int = 60) -> float:
    """Smallest kappa with {s, t} <= kappa * (s/log s)^s over the scan range."""
    if not 2 <= s_lo <= s_hi <= STIRLING_MAX_S:
        raise ValueError("scan range must sit inside [2, table max]")
    table = build_stirling_table()
    kappa = 0.0
    for s in range(s_lo, s_hi + 1):
        envelope = (s / math.log(s)) ** s
        best = max(table.values[s - 1])
        kappa = max(kappa, best / envelope)
    return kappa


def factorial_ratio_check(j: int, m: int) -> bool:
    """m^j <= e^j * m!/(m-j)! whenever m >= 3j/2, via exact log comparison."""
    if j < 1 or m < j:
        raise ValueError("need 1 <= j <= m")
    if 2 * m < 3 * j:
        raise ValueError("inequality is only claimed for m >= 3j/2")
    return j * math.log(m) <= j + math.log(math.perm(m, j))


# --- moments over the weight table ---

RANGE_TAGS = ("tiny", "medium", "large", "power")


@dataclass(frozen=True)
class MomentReport:
    k: int
    range_tag: str
    s: int
    exact_moment: float
    paper_bound: float
    ratio: float
    centered: bool
    flagged_empty: bool = False


def _range_R(params: SieveParams, k: int) -> float:
    # far shifts keep the clamped trivial level, so their medium range is empty
    return params.R(k) if k <= params.K else float(params.w)


def range_moduli(params: SieveParams, k: int, range_tag: str) -> tuple[int, ...]:
    """The divisor moduli entering the range's indicator sum."""
    r_k = _range_R(params, k)
    t_cut = params.T
    if range_tag == "tiny":
        return params.tiny_primes
    if range_tag == "medium":
        return tuple(p for p in _primes_upto(int(r_k)) if params.w < p <= r_k)
    if range_tag == "large":
        return tuple(p for p in _primes_upto(int(t_cut)) if r_k < p <= t_cut)
    if range_tag == "power":
        mods = []
        for p in _primes_upto(int(t_cut)):
            j_min = params.a + 1 if p <= params.w else 2
            q = p**j_min
            while q <= t_cut:
                mods.append(int(q))
                q *= p
        return tuple(sorted(mods))
    raise ValueError(f"unknown range tag {range_tag!r}; expected one of {RANGE_TAGS}")


def _display_bound(
    range_tag: str, params: SieveParams, k: int, s: int, C3: float, centered: bool
) -> float:
    if range_tag == "tiny":
        # tiny-prime divisibility is rigid, so the sum is a known constant
        det = math.fsum((1.0 if k % p == 0 else 0.0) for p in params.tiny_primes)
        if centered:
            det -= math.fsum(1.0 / p for p in params.tiny_primes)
        return abs(det) ** s
    if range_tag == "medium":
        return (2.0 * C3 * s) ** s
    if range_tag == "large":
        return (132.0 * params.A * math.log(k)) ** s if k >= 2 else 0.0
    return 2.0 ** (19 * s) + 2.0**s


def exact_centered_moment(
    table: WeightTable,
    k: int,
    range_tag: str,
    s: int,
    centered: bool = True,
    C3: float = 3.0,
) -> MomentReport:
    """s-th weighted moment of sum_{m in range} (1_{m | n+k} - [centered]/m).

    Full enumeration over the support; the bound column is display-only
    (the configured-constant shape of the corresponding asymptotic bound).
    """
    if k < 1:
        raise ValueError("shift k must be >= 1")
    if not 1 <= s <= 12:
        raise ValueError("moment order s must lie in [1, 12]")
    params = table.params
    moduli = range_moduli(params, k, range_tag)
    bound = _display_bound(range_tag, params, k, s, C3, centered)
    if not moduli:
        return MomentReport(k, range_tag, s, 0.0, bound, 0.0, centered, flagged_empty=True)
    acc = np.zeros(len(table.support), dtype=np.float64)
    shifted = table.support + k
    for m in moduli:
        acc[shifted % m == 0] += 1.0
    if centered:
        acc -= math.fsum(1.0 / m for m in moduli)
    moment = math.fsum((table.nu * acc**s).tolist()) / table.total
    ratio = moment / bound if bound > 0 else 0.0
    return MomentReport(k, range_tag, s, moment, bound, ratio, centered)


def chebyshev_tail(moment: float, r: float, s: int) -> float:
    """moment / r^s clamped to [0, 1]; the Markov/Chebyshev tail estimate."""
    if r <= 0:
        raise ValueError("threshold r must be positive")
    if s < 1:
        raise ValueError("moment order s must be >= 1")
    if moment < 0:
        raise ValueError("moment must be nonnegative")
    return min(1.0, moment / r**s)


def exact_tail(table: WeightTable, k: int, range_tag: str, r: float, centered: bool = True) -> float:
    """Weighted mass of {n : |sum over the range at shift k| >= r}."""
    params = table.params
    moduli = range_moduli(params, k, range_tag)
    if not moduli:
        return 0.0
    acc = np.zeros(len(table.support), dtype=np.float64)
    shifted = table.support + k
    for m in moduli:
        acc[shifted % m == 0] += 1.0
    if centered:
        acc -= math.fsum(1.0 / m for m in moduli)
    mask = np.abs(acc) >= r
    return math.fsum(table.nu[mask].tolist()) / table.total


def fit_c3(reports: Sequence[MomentReport]) -> Optional[float]:
    """Smallest C3 putting every medium-range moment under (2*C3*s)^s."""
    best = None
    for rep in reports:
        if rep.range_tag != "medium" or rep.exact_moment <= 0:
            continue
        val = rep.exact_moment ** (1.0 / rep.s) / (2.0 * rep.s)
        best = val if best is None else max(best, val)
    return best


# --- the partition sum G and its exponential-formula twin ---

def _set_partitions(n: int):
    """Yield all partitions of {0..n-1} as lists of blocks."""
    if n == 0:
        yield []
        return
    for rest in _set_partitions(n - 1):
        item = n - 1
        for i in range(len(rest)):
            yield rest[:i] + [rest[i] + [item]] + rest[i + 1 :]
        yield rest + [[item]]


def _poly_mul(a: list, b: list, cap: int) -> list:
    out = [Fraction(0)] * min(cap + 1, len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            if i + j > cap:
                break
            out[i + j] += ai * bj
    return out


def partition_sum_G(s3: int, R: float) -> float:
    """G(s3, R) = sum over set partitions of prod_B 2^(2|B|+1) / R^(2|B|-1).

    Computed twice, by direct block enumeration and as the y^s3 coefficient
    of s3! * exp(sum_m 2^(2m+1) y^m / (R^(2m-1) m!)), both in exact rational
    arithmetic; a mismatch raises rather than returning either value.
    """
    if s3 < 1:
        raise ValueError("s3 must be >= 1")
    if s3 > 10:
        raise BudgetExceededError("partition enumeration is capped at s3 <= 10")
    if not R > 2:
        raise ValueError("R must exceed 2")
    R_frac = Fraction(R)
    direct = Fraction(0)
    for part in _set_partitions(s3):
        term = Fraction(1)
        for block in part:
            b = len(block)
            term *= Fraction(2 ** (2 * b + 1)) / R_frac ** (2 * b - 1)
        direct += term
    # EGF route: exp of the block series, truncated at degree s3
    f = [Fraction(0)] * (s3 + 1)
    for m in range(1, s3 + 1):
        f[m] = Fraction(2 ** (2 * m + 1)) / (R_frac ** (2 * m - 1) * math.factorial(m))
    series = [Fraction(1)] + [Fraction(0)] * s3
    power = [Fraction(1)]
    for j in range(1, s3 + 1):
        power = _poly_mul(power, f, s3)
        inv_fact = Fraction(1, math.factorial(j))
        for i, c in enumerate(power):
            series[i] += c * inv_fact
    egf = series[s3] * math.factorial(s3)
    if direct != egf:
        rel = abs(float(direct - egf)) / max(abs(float(direct)), 1e-300)
        if rel > 1e-10:
            raise NumericFailureError(
                f"partition sum routes disagree: direct={direct}, egf={egf}"
            )
    return float(direct)


# --- the ordered-simplex product rho_r ---

@dataclass(frozen=True)
class SimplexReport:
    r: int
    grid: int
    argmax: tuple[float, ...]
    max_value: float
    uniform_value: float
    uniform_distance: float

    def maximizer_is_uniform(self) -> bool:
        return self.uniform_distance <= 1.0 / self.grid


def rho_r(alphas: Sequence[float]) -> float:
    """prod_i (32 / (alpha_i * q_i^5))^alpha_i with q_i the i-th prime."""
    if len(alphas) > len(_SIMPLEX_PRIMES):
        raise ValueError(f"at most {len(_SIMPLEX_PRIMES)} coordinates supported")
    log_val = 0.0
    for a, q in zip(alphas, _SIMPLEX_PRIMES):
        if a <= 0:
            raise ValueError("simplex coordinates must be positive")
        log_val += a * math.log(32.0 / (a * q**5))
    return math.exp(log_val)


def _ordered_compositions(total: int, parts: int, minimum: int):
    """Nondecreasing positive integer tuples of the given length and sum."""
    if parts == 1:
        if total >= minimum:
            yield (total,)
        return
    for first in range(minimum, total // parts + 1):
        for rest in _ordered_compositions(total - first, parts - 1, first):
            yield (first,) + rest


def rho_r_maximize(r: int, grid: int = 1000) -> SimplexReport:
    """Grid search of rho_r over the nondecreasing simplex alpha_1 <= ... <= alpha_r.

    The ordering constraint matters: without it the product is maximized at
    lopsided points that load mass on the smallest prime.
    """
    if not 1 <= r <= 6:
        raise ValueError("r must lie in [1, 6]")
    if grid < r:
        raise ValueError("grid must allow at least one point per coordinate")
    if r == 1:
        val = rho_r((1.0,))
        return SimplexReport(1, grid, (1.0,), val, val, 0.0)
    best_val = -math.inf
    best_alpha = None
    for comp in _ordered_compositions(grid, r, 1):
        alphas = tuple(c / grid for c in comp)
        val = rho_r(alphas)
        if val > best_val:
            best_val = val
            best_alpha = alphas
    uniform = tuple(1.0 / r for _ in range(r))
    return SimplexReport(
        r=r,
        grid=grid,
        argmax=best_alpha,
        max_value=best_val,
        uniform_value=rho_r(uniform),
        uniform_distance=max(abs(a - 1.0 / r) for a in best_alpha),
    )


# --- union bounds and the Omega decomposition ---

@dataclass(frozen=True)
class UnionBoundReport:
    C: float
    k_max: int
    terms: tuple[float, ...]
    total: float
    witness_n: int
    witness_value: float


def union_bound_report(table: WeightTable, C: float, k_max: int) -> UnionBoundReport:
    """Exact tail masses P(Omega(n+k) > C log k) for k = 2..k_max.

    Also reports the support point minimizing max_k Omega(n+k)/log k, the
    witness that the tails cannot all be large at once.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    support = table.support
    lo = int(support[0]) + 2
    hi = int(support[-1]) + k_max
    ptable = build_prime_table(math.isqrt(hi) + 1)
    window = factor_window(lo, hi, ptable)
    omega_all = window.big_omega.astype(np.int64)

    terms = []
    worst_ratio = np.zeros(len(support), dtype=np.float64)
    base = lo
    for k in range(2, k_max + 1):
        idx = (support + k) - base
        om = omega_all[idx]
        log_k = math.log(k)
        mask = om > C * log_k
        terms.append(math.fsum(table.nu[mask].tolist()) / table.total)
        np.maximum(worst_ratio, om / log_k, out=worst_ratio)
    arg = int(np.argmin(worst_ratio))
    return UnionBoundReport(
        C=C,
        k_max=k_max,
        terms=tuple(terms),
        total=math.fsum(terms),
        witness_n=int(support[arg]),
        witness_value=float(worst_ratio[arg]),
    )


def trivial_tail_bound(n: int, k: int, table: Optional[PrimeTable] = None) -> float:
    """log(n+k)/log 2, an unconditional cap on Omega(n+k)."""
    if n + k < 2:
        raise ValueError("need n + k >= 2")
    bound = math.log(n + k) / math.log(2)
    if table is not None:
        if big_omega(n + k, table) > bound:
            raise NumericFailureError("2^Omega(m) <= m violated; table corrupt")
    return bound


@dataclass(frozen=True)
class OmegaParts:
    """Multiplicity-weighted classification of the primes dividing n+k."""

    n: int
    k: int
    tiny: int
    medium: int
    large: int
    very_large: int
    higher_power: int

    def total(self) -> int:
        return self.tiny + self.medium + self.large + self.very_large + self.higher_power


def omega_decomposition(
    n: int, k: int, params: SieveParams, table: PrimeTable
) -> OmegaParts:
    """Split Omega(n+k) by the size class of each prime; repeats beyond the
    first power all land in the higher-power class, so the parts sum to
    Omega(n+k) exactly."""
    m = n + k
    fac = factorize(m, table)
    r_k = _range_R(params, k)
    tiny = medium = large = very_large = higher = 0
    for p, e in fac.factors:
        if p <= params.w:
            tiny += 1
        elif p <= r_k:
            medium += 1
        elif p <= params.T:
            large += 1
        else:
            very_large += 1
        higher += e - 1
    return OmegaParts(n=n, k=k, tiny=tiny, medium=medium, large=large,
                      very_large=very_large, higher_power=higher)


# --- configured-constant bookkeeping ---

def validate_constants(C1: float, C2: float, C3: float) -> dict:
    """Arithmetic over the configured constant chain; flags requirement
    violations without asserting them."""
    if min(C1, C3) <= 0 or C2 <= 1:
        raise ValueError("need C1, C3 > 0 and C2 > 1")
    e = math.e
    c3_prime = max(C3, 66.0 * math.log(C2) / math.log(2))
    A = (4.0 * math.log(C2) / math.log(2)) * max(C1 / (8.0 * c3_prime * e), 1.0)
    requirement = max(8.0 * e * c3_prime, 132.0 * A * e, 2.0**19 * e)
    # A is chosen to make 132*A*e land exactly on C1 once C1 is large, so the
    # comparison sits on the boundary; allow rounding-level slack.
    return {
        "C1": C1,
        "C2": C2,
        "C3": C3,
        "C3_prime": c3_prime,
        "A": A,
        "C1_requirement": requirement,
        "ok": C1 >= requirement * (1.0 - 1e-12),
    }


# --- emitters ---

def write_moments_csv(reports: Sequence[MomentReport], path) -> None:
    rows = [
        (rep.k, rep.range_tag, rep.s, rep.exact_moment, rep.paper_bound, rep.ratio)
        for rep in reports
    ]
    write_csv(path, ["k", "range", "s", "exact_moment", "paper_bound", "ratio"], rows)


def write_union_bound_csv(report: UnionBoundReport, path) -> None:
    rows = [
        (k, report.C, term)
        for k, term in enumerate(report.terms, start=2)
    ]
    write_csv(path, ["k", "C", "tail_prob"], rows)


def write_constants_json(path, kappa: float, c3_fit: Optional[float], constants: dict) -> None:
    payload = {"kappa_fit": kappa, "C3_fit": c3_fit, "constants": constants}
    write_json(path, payload)
