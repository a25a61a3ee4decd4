"""Exact factorization and the classical arithmetic functions (omega, Omega, tau, mu)
over single integers and over contiguous windows, via segmented sieving.

Everything in this module stays machine-word sized (n <= 2**63 - 1).  Exact
big-integer work lives in moments_concentration, on top of the factorizations
produced here.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import fsum, isqrt

import numpy as np

from .errors import TableTooSmallError

WORD_MAX = 2**63 - 1

# Full spf arrays beyond this are memory-budgeted out; larger n are handled by
# trial division / segmented sieving with primes <= sqrt(n).
TABLE_LIMIT_MAX = 10**8

PRIME_TABLE_MAGIC = b"RLPT1"


@dataclass(frozen=True)
class PrimeTable:
    """Primes up to `limit` plus a smallest-prime-factor array.

    spf[n] is the smallest prime factor of n for 2 <= n <= limit; spf[0] and
    spf[1] are 0.  Immutable; safe to share across workers.
    """

    limit: int
    primes: np.ndarray
    spf: np.ndarray

    def is_prime(self, n: int) -> bool:
        if not 2 <= n <= self.limit:
            raise ValueError("is_prime query outside table limit")
        return int(self.spf[n]) == n


@dataclass(frozen=True)
class Factorization:
    n: int
    factors: tuple[tuple[int, int], ...]

    def omega(self) -> int:
        return len(self.factors)

    def big_omega(self) -> int:
        return sum(e for _, e in self.factors)

    def tau(self) -> int:
        t = 1
        for _, e in self.factors:
            t *= e + 1
        return t

    def mobius(self) -> int:
        if any(e > 1 for _, e in self.factors):
            return 0
        return -1 if len(self.factors) % 2 else 1


def _sieve_spf(limit: int) -> np.ndarray:
    spf = np.zeros(limit + 1, dtype=np.int64)
    for p in range(2, isqrt(limit) + 1):
        if spf[p] == 0:
            block = spf[p * p :: p]
            block[block == 0] = p
    # untouched entries >= 2 are prime
    for lo in range(2, limit + 1, 1 << 22):
        hi = min(lo + (1 << 22), limit + 1)
        block = spf[lo:hi]
        idx = np.flatnonzero(block == 0)
        block[idx] = idx + lo
    return spf


def build_prime_table(limit: int) -> PrimeTable:
    if limit < 2:
        raise ValueError("prime table limit must be >= 2")
    if limit > TABLE_LIMIT_MAX:
        raise ValueError(f"prime table limit above memory budget ({TABLE_LIMIT_MAX})")
    spf = _sieve_spf(limit)
    chunks = []
    for lo in range(2, limit + 1, 1 << 22):
        hi = min(lo + (1 << 22), limit + 1)
        block = spf[lo:hi]
        chunks.append(np.flatnonzero(block == np.arange(lo, hi, dtype=np.int64)) + lo)
    primes = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    spf.setflags(write=False)
    primes.setflags(write=False)
    return PrimeTable(limit=limit, primes=primes, spf=spf)


def _check_n(n: int) -> None:
    if n == 0:
        raise ValueError("n must be >= 1")
    if n < 0 or n > WORD_MAX:
        raise ValueError("n outside machine-word range")


def _prime_powers(n: int, table: PrimeTable):
    """Yield (prime, exponent) pairs of n in increasing prime order."""
    if n <= table.limit:
        spf = table.spf
        while n > 1:
            p = int(spf[n])
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            yield p, e
        return
    if n > table.limit * table.limit:
        raise TableTooSmallError(
            f"factoring {n} needs primes up to {isqrt(n)}, table limit is {table.limit}"
        )
    for p in table.primes:
        p = int(p)
        if p * p > n:
            break
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            yield p, e
    if n > 1:
        yield n, 1


def factorize(n: int, table: PrimeTable) -> Factorization:
    _check_n(n)
    return Factorization(n=n, factors=tuple(_prime_powers(n, table)))


def omega(n: int, table: PrimeTable) -> int:
    _check_n(n)
    return sum(1 for _ in _prime_powers(n, table))


def big_omega(n: int, table: PrimeTable) -> int:
    _check_n(n)
    return sum(e for _, e in _prime_powers(n, table))


def tau(n: int, table: PrimeTable) -> int:
    _check_n(n)
    t = 1
    for _, e in _prime_powers(n, table):
        t *= e + 1
    return t


def mobius(n: int, table: PrimeTable) -> int:
    # short-circuits on the first squared prime, the dominant case in sieve sums
    _check_n(n)
    count = 0
    for _, e in _prime_powers(n, table):
        if e > 1:
            return 0
        count += 1
    return -1 if count % 2 else 1


@dataclass(frozen=True)
class WindowFactors:
    """Full factorizations for every n in [lo, hi], stored in CSR layout.

    omega/big_omega are dense arrays indexed by n-lo; the (prime, exponent)
    pairs for n live in fac_primes/fac_exps[offsets[i]:offsets[i+1]], primes
    ascending.  Immutable; parallel readers are safe.
    """

    lo: int
    hi: int
    omega: np.ndarray
    big_omega: np.ndarray
    offsets: np.ndarray
    fac_primes: np.ndarray
    fac_exps: np.ndarray

    def _index(self, n: int) -> int:
        if not self.lo <= n <= self.hi:
            raise ValueError(f"n={n} outside window [{self.lo}, {self.hi}]")
        return n - self.lo

    def factorization(self, n: int) -> Factorization:
        i = self._index(n)
        a, b = int(self.offsets[i]), int(self.offsets[i + 1])
        pairs = tuple(
            (int(p), int(e)) for p, e in zip(self.fac_primes[a:b], self.fac_exps[a:b])
        )
        return Factorization(n=n, factors=pairs)

    def omega_of(self, n: int) -> int:
        return int(self.omega[self._index(n)])

    def big_omega_of(self, n: int) -> int:
        return int(self.big_omega[self._index(n)])


WINDOW_WIDTH_MAX = 10**7


def factor_window(lo: int, hi: int, table: PrimeTable) -> WindowFactors:
    if lo < 2 or hi < lo:
        raise ValueError("window needs 2 <= lo <= hi")
    if hi > WORD_MAX:
        raise ValueError("window end outside machine-word range")
    if hi - lo + 1 > WINDOW_WIDTH_MAX:
        raise ValueError(f"window wider than budget ({WINDOW_WIDTH_MAX})")
    if table.limit * table.limit < hi:
        raise TableTooSmallError(
            f"window up to {hi} needs primes up to {isqrt(hi)}, table limit is {table.limit}"
        )
    width = hi - lo + 1
    residual = np.arange(lo, hi + 1, dtype=np.int64)
    om = np.zeros(width, dtype=np.int16)
    bom = np.zeros(width, dtype=np.int16)
    idx_parts: list[np.ndarray] = []
    prime_parts: list[np.ndarray] = []
    exp_parts: list[np.ndarray] = []
    root = isqrt(hi)
    for p in table.primes:
        p = int(p)
        if p > root:
            break
        first = lo + (-lo) % p
        if first > hi:
            continue
        idx = np.arange(first - lo, width, p, dtype=np.int64)
        residual[idx] //= p
        exps = np.ones(len(idx), dtype=np.int8)
        sel = np.arange(len(idx))
        while len(sel):
            m = residual[idx[sel]] % p == 0
            if not m.any():
                break
            sel = sel[m]
            residual[idx[sel]] //= p
            exps[sel] += 1
        idx_parts.append(idx)
        prime_parts.append(np.full(len(idx), p, dtype=np.int64))
        exp_parts.append(exps)
        om[idx] += 1
        bom[idx] += exps
    cof = np.flatnonzero(residual > 1)
    if len(cof):
        idx_parts.append(cof)
        prime_parts.append(residual[cof].copy())
        exp_parts.append(np.ones(len(cof), dtype=np.int8))
        om[cof] += 1
        bom[cof] += 1
    if idx_parts:
        all_idx = np.concatenate(idx_parts)
        all_p = np.concatenate(prime_parts)
        all_e = np.concatenate(exp_parts)
        order = np.lexsort((all_p, all_idx))
        all_idx, all_p, all_e = all_idx[order], all_p[order], all_e[order]
        counts = np.bincount(all_idx, minlength=width)
    else:
        all_idx = np.zeros(0, dtype=np.int64)
        all_p = np.zeros(0, dtype=np.int64)
        all_e = np.zeros(0, dtype=np.int8)
        counts = np.zeros(width, dtype=np.int64)
    offsets = np.zeros(width + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    for arr in (om, bom, offsets, all_p, all_e):
        arr.setflags(write=False)
    return WindowFactors(
        lo=lo, hi=hi, omega=om, big_omega=bom,
        offsets=offsets, fac_primes=all_p, fac_exps=all_e,
    )


def mertens_partial_sum(lo: float, hi: float, table: PrimeTable) -> float:
    """Sum of 1/p over primes lo < p <= hi, as a floating sum over table primes."""
    if lo < 1 or lo > hi:
        raise ValueError("need 1 <= lo <= hi")
    if hi > table.limit:
        raise TableTooSmallError(f"upper end {hi} beyond table limit {table.limit}")
    i = int(np.searchsorted(table.primes, lo, side="right"))
    j = int(np.searchsorted(table.primes, hi, side="right"))
    return fsum(1.0 / p for p in table.primes[i:j].tolist())


def dump_prime_table(table: PrimeTable, path) -> None:
    """Binary dump: magic "RLPT1", little-endian u64 limit/count, u64 prime list."""
    with open(path, "wb") as fh:
        fh.write(PRIME_TABLE_MAGIC)
        fh.write(struct.pack("<QQ", table.limit, len(table.primes)))
        fh.write(table.primes.astype("<u8").tobytes())


def load_prime_table(path) -> PrimeTable:
    with open(path, "rb") as fh:
        magic = fh.read(len(PRIME_TABLE_MAGIC))
        if magic != PRIME_TABLE_MAGIC:
            raise ValueError("not a prime table dump (bad magic)")
        limit, count = struct.unpack("<QQ", fh.read(16))
        primes = np.frombuffer(fh.read(8 * count), dtype="<u8").astype(np.int64)
    if len(primes) != count or (count and primes[-1] > limit):
        raise ValueError("prime table dump is corrupt")
    # rebuild spf by marking with the known primes (no rediscovery pass)
    spf = np.zeros(limit + 1, dtype=np.int64)
    for p in primes:
        p = int(p)
        if p * p > limit:
            break
        block = spf[p * p :: p]
        block[block == 0] = p
    idx = np.flatnonzero(spf[2:] == 0) + 2
    spf[idx] = idx
    spf.setflags(write=False)
    primes.setflags(write=False)
    return PrimeTable(limit=int(limit), primes=primes, spf=spf)
