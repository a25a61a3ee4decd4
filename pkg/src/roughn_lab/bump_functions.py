"""Smooth cutoff machinery.

Builds the even bump eta with eta(0)=1 and nonnegative Fourier profile as the
normalized autocorrelation of a compactly supported base bump, the twisted
cutoff eta_tilde(u) = exp(-u) * eta(u), the numeric Fourier transform
eta_hat(t) = (1/2pi) * integral eta(u) exp(itu) du, and the normalization
constant c0 by two independent routes (time side and frequency side).

All integrals are composite Simpson on uniform grids.  The base bump is flat
to every order at the edge of its support, so these quadratures converge
faster than any power of the step; the self-checks below measure that rather
than assume it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericFailureError, OutOfRangeError
from .reporting import write_csv

BASE_HALF_WIDTH = 0.5


def standard_base(u):
    """exp(-1/(1-4u^2)) inside (-1/2, 1/2), zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < BASE_HALF_WIDTH
    v = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - 4.0 * v * v))
    return out


def standard_base_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < BASE_HALF_WIDTH
    v = u[inside]
    q = 1.0 - 4.0 * v * v
    out[inside] = np.exp(-1.0 / q) * (-8.0 * v) / (q * q)
    return out


def simpson_weights(n_points: int, h: float) -> np.ndarray:
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("composite Simpson needs an odd point count >= 3")
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


@dataclass(frozen=True)
class BumpSpec:
    """Cached grids for one bump construction.  Immutable and reentrant."""

    grid_points: int
    h: float
    t_max: float
    t_points: int
    norm: float
    u_grid: np.ndarray
    eta: np.ndarray
    eta_prime: np.ndarray
    eta_tilde: np.ndarray
    eta_tilde_prime: np.ndarray
    t_grid: np.ndarray
    eta_hat_grid: np.ndarray
    base: Callable
    base_prime: Callable
    base_weights: np.ndarray  # simpson weights * base values on the base grid
    base_grid: np.ndarray


def _validate_base(base: Callable) -> None:
    us = np.linspace(0.0, 0.75, 151)
    vals_p = base(us)
    vals_m = base(-us)
    if np.any(~np.isfinite(vals_p)) or np.any(vals_p < 0):
        raise ValueError("base bump must be finite and nonnegative")
    if np.max(np.abs(vals_p - vals_m)) > 1e-12 * max(1.0, np.max(np.abs(vals_p))):
        raise ValueError("base bump must be even")
    outside = us >= BASE_HALF_WIDTH
    if np.any(vals_p[outside] != 0.0):
        raise ValueError("base bump must vanish outside [-1/2, 1/2]")
    if np.max(vals_p) == 0.0:
        raise ValueError("base bump is identically zero")


def make_bump(
    grid_points: int = 4097,
    t_max: float = 200.0,
    t_points: int = 4001,
    base: Optional[Callable] = None,
    base_prime: Optional[Callable] = None,
) -> BumpSpec:
    """Build the normalized autocorrelation bump and cache its sample grids.

    grid_points covers [-1, 1] and must be 1 mod 4 so that both the full grid
    and the half grids carry composite Simpson rules.
    """
    if grid_points < 257 or grid_points % 4 != 1:
        raise ValueError("grid_points must be >= 257 and congruent to 1 mod 4")
    if t_points < 251 or t_points % 4 != 1:
        raise ValueError("t_points must be >= 251 and congruent to 1 mod 4")
    if not (t_max > 0 and np.isfinite(t_max)):
        raise ValueError("t_max must be positive and finite")
    if base is None:
        base = standard_base
        base_prime = standard_base_prime
    else:
        if base_prime is None:
            raise ValueError("a custom base bump needs its analytic derivative")
        _validate_base(base)

    h = 2.0 / (grid_points - 1)
    u_grid = -1.0 + h * np.arange(grid_points)
    nb = (grid_points - 1) // 2 + 1  # base grid point count on [-1/2, 1/2]
    base_grid = -BASE_HALF_WIDTH + h * np.arange(nb)
    # extended grid covering w + u for w in the base support, u in [-1, 1]
    ext_grid = -1.5 + h * np.arange(3 * (grid_points - 1) // 2 + 1)
    b_ext = base(ext_grid)
    bp_ext = base_prime(ext_grid)
    b0 = b_ext[(grid_points - 1) // 2 : (grid_points - 1) // 2 + nb]
    wb = simpson_weights(nb, h) * b0

    windows = np.lib.stride_tricks.sliding_window_view(b_ext, nb)
    corr = windows @ wb  # autocorrelation on u_grid
    windows_p = np.lib.stride_tricks.sliding_window_view(bp_ext, nb)
    corr_prime = windows_p @ wb

    norm = float(corr[(grid_points - 1) // 2])
    if not np.isfinite(norm) or norm <= 0:
        raise NumericFailureError(f"autocorrelation normalization came out {norm}")
    # enforce exact evenness; the correlation of an even base is even
    corr = 0.5 * (corr + corr[::-1])
    corr_prime = 0.5 * (corr_prime - corr_prime[::-1])

    eta = corr / norm
    eta_prime = corr_prime / norm
    decay = np.exp(-u_grid)
    eta_tilde = decay * eta
    eta_tilde_prime = decay * (eta_prime - eta)

    t_grid = np.linspace(0.0, t_max, t_points)
    eta_hat_grid = _eta_hat_from_samples(t_grid, u_grid, eta, h)

    spec = BumpSpec(
        grid_points=grid_points,
        h=h,
        t_max=float(t_max),
        t_points=t_points,
        norm=norm,
        u_grid=u_grid,
        eta=eta,
        eta_prime=eta_prime,
        eta_tilde=eta_tilde,
        eta_tilde_prime=eta_tilde_prime,
        t_grid=t_grid,
        eta_hat_grid=eta_hat_grid,
        base=base,
        base_prime=base_prime,
        base_weights=wb,
        base_grid=base_grid,
    )
    if abs(eta_value(0.0, spec) - 1.0) > 1e-12:
        raise NumericFailureError("eta(0) failed to normalize to 1")
    if eta_hat_grid.min() < -1e-10:
        raise NumericFailureError(
            f"eta_hat dipped to {eta_hat_grid.min():.3e}; should be >= 0 up to quadrature noise"
        )
    return spec


def _eta_hat_from_samples(ts, u_grid, eta_samples, h, chunk=256):
    wu = simpson_weights(len(u_grid), h) * eta_samples
    out = np.empty(len(ts))
    for a in range(0, len(ts), chunk):
        block = np.asarray(ts[a : a + chunk])
        out[a : a + chunk] = np.cos(np.outer(block, u_grid)) @ wu
    return out / (2.0 * np.pi)


def eta_value(u, spec: BumpSpec):
    """eta at arbitrary points, by Simpson over the cached base grid."""
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    vals = spec.base(arr[:, None] + spec.base_grid[None, :]) @ spec.base_weights / spec.norm
    vals[np.abs(arr) >= 1.0] = 0.0
    return vals if np.ndim(u) else float(vals[0])


def eta_prime_value(u, spec: BumpSpec):
    """eta' at arbitrary points, differentiated under the convolution integral."""
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    vals = spec.base_prime(arr[:, None] + spec.base_grid[None, :]) @ spec.base_weights / spec.norm
    vals[np.abs(arr) >= 1.0] = 0.0
    return vals if np.ndim(u) else float(vals[0])


def eta_tilde(u, spec: BumpSpec):
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    vals = np.exp(-arr) * eta_value(arr, spec)
    return vals if np.ndim(u) else float(vals[0])


def eta_tilde_prime(u, spec: BumpSpec):
    arr = np.atleast_1d(np.asarray(u, dtype=float))
    vals = np.exp(-arr) * (eta_prime_value(arr, spec) - eta_value(arr, spec))
    return vals if np.ndim(u) else float(vals[0])


def eta_hat(t, spec: BumpSpec):
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.abs(arr) > spec.t_max):
        raise OutOfRangeError(f"|t| beyond cached truncation t_max={spec.t_max}")
    vals = _eta_hat_from_samples(np.abs(arr), spec.u_grid, spec.eta, spec.h)
    return vals if np.ndim(t) else float(vals[0])


def _symmetric_t_grid(spec: BumpSpec, extend_to: float = 0.0):
    """Symmetric t grid with eta_hat values, optionally extended past t_max."""
    ht = spec.t_grid[1] - spec.t_grid[0]
    pos_t = spec.t_grid
    pos_h = spec.eta_hat_grid
    if extend_to > spec.t_max:
        n_extra = int(np.ceil((extend_to - spec.t_max) / ht))
        if n_extra % 2:
            n_extra += 1  # keep the total point count odd
        extra_t = spec.t_max + ht * np.arange(1, n_extra + 1)
        extra_h = _eta_hat_from_samples(extra_t, spec.u_grid, spec.eta, spec.h)
        pos_t = np.concatenate([pos_t, extra_t])
        pos_h = np.concatenate([pos_h, extra_h])
    ts = np.concatenate([-pos_t[::-1][:-1], pos_t])
    hs = np.concatenate([pos_h[::-1][:-1], pos_h])
    return ts, hs, ht


@dataclass(frozen=True)
class C0Result:
    c0_time: float
    c0_freq: float
    err_time: float
    err_freq: float

    def combined_error(self) -> float:
        return self.err_time + self.err_freq


def _time_route(spec: BumpSpec, refine: int) -> float:
    """integral over [0,1] of eta_tilde'(u)^2 with step h/refine."""
    n = (spec.grid_points - 1) // 2 * refine + 1
    us = np.linspace(0.0, 1.0, n)
    vals = eta_tilde_prime(us, spec)
    return float(simpson_weights(n, us[1] - us[0]) @ (vals * vals))


def _freq_route(ts, hs, ht, chunk=512) -> float:
    wh = simpson_weights(len(ts), ht) * hs
    total = 0.0
    for a in range(0, len(ts), chunk):
        ta = ts[a : a + chunk][:, None]
        fac = 1.0 - (2.0 + 2.0 * ta * ts[None, :]) / (4.0 + (ta + ts[None, :]) ** 2)
        total += float(wh[a : a + chunk] @ (fac @ wh))
    return total


def c0_compute(spec: BumpSpec) -> C0Result:
    """The normalization constant by both routes, with measured error estimates.

    Time route: integral_0^1 eta_tilde'(u)^2 du, Richardson-checked by halving
    the step.  Frequency route: the double integral of
    (1+it)(1+it') / (2+i(t+t')) eta_hat(t) eta_hat(t'), whose real part is
    (1 - (2+2tt')/(4+(t+t')^2)) eta_hat(t) eta_hat(t'); checked by halving the
    t resolution and by extending the truncation past t_max.
    """
    i_coarse = _time_route(spec, 1)
    i_fine = _time_route(spec, 2)
    c0_time = i_fine
    err_time = abs(i_fine - i_coarse) + 1e-12

    ts, hs, ht = _symmetric_t_grid(spec)
    s_base = _freq_route(ts, hs, ht)
    s_coarse = _freq_route(ts[::2], hs[::2], 2 * ht)
    ts_x, hs_x, _ = _symmetric_t_grid(spec, extend_to=1.25 * spec.t_max)
    s_ext = _freq_route(ts_x, hs_x, ht)
    c0_freq = s_ext
    err_freq = abs(s_base - s_coarse) + 2.0 * abs(s_ext - s_base) + 1e-10

    for name, v in (("c0_time", c0_time), ("c0_freq", c0_freq)):
        if not np.isfinite(v):
            raise NumericFailureError(f"{name} quadrature returned {v}")
    result = C0Result(c0_time=c0_time, c0_freq=c0_freq, err_time=err_time, err_freq=err_freq)
    if result.c0_time < 1.0 - 1e-9:
        raise NumericFailureError(
            f"c0_time={result.c0_time} violates the lower bound 1 (err {err_time:.2e})"
        )
    if abs(result.c0_time - result.c0_freq) > result.combined_error():
        raise NumericFailureError(
            "dual-route disagreement "
            f"{abs(c0_time - c0_freq):.3e} exceeds combined estimate {result.combined_error():.3e}"
        )
    return result


@dataclass(frozen=True)
class DecayProfile:
    ts: np.ndarray
    abs_eta_hat: np.ndarray
    envelope: np.ndarray  # |eta_hat| * exp(c * sqrt(t)) for the fitted c
    fitted_c: float
    envelope_sup: float

    def rows(self):
        return list(zip(self.ts.tolist(), self.abs_eta_hat.tolist(), self.envelope.tolist()))


def decay_profile(spec: BumpSpec, n_bins: int = 40) -> DecayProfile:
    """Half-exponential decay samples (t, |eta_hat|, |eta_hat| e^{c sqrt t}).

    c is fitted on per-bin envelope maxima (eta_hat has isolated zeros, so a
    pointwise fit of log|eta_hat| would be dominated by the dips).
    """
    ts = spec.t_grid
    ah = np.abs(spec.eta_hat_grid)
    lo = 1.0
    mask = ts >= lo
    edges = np.linspace(lo, spec.t_max, n_bins + 1)
    mids, tops = [], []
    for i in range(n_bins):
        sel = (ts >= edges[i]) & (ts <= edges[i + 1])
        if sel.any() and ah[sel].max() > 0:
            j = np.argmax(ah * sel)
            mids.append(ts[j])
            tops.append(ah[j])
    mids = np.array(mids)
    tops = np.array(tops)
    # least squares: log|eta_hat| ~ a - c sqrt(t)
    A = np.stack([np.ones_like(mids), -np.sqrt(mids)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(tops), rcond=None)
    c = float(coef[1])
    envelope = ah * np.exp(c * np.sqrt(np.abs(ts)))
    return DecayProfile(
        ts=ts,
        abs_eta_hat=ah,
        envelope=envelope,
        fitted_c=c,
        envelope_sup=float(envelope[mask].max()) if mask.any() else float(envelope.max()),
    )


def fourier_inverse_check(spec: BumpSpec, us) -> tuple[float, float]:
    """Max deviation of the plain and twisted inversions at the given u's."""
    ts, hs, ht = _symmetric_t_grid(spec)
    wh = simpson_weights(len(ts), ht) * hs
    worst_plain = 0.0
    worst_twist = 0.0
    for u in np.atleast_1d(us):
        u = float(u)
        plain = float(wh @ np.cos(ts * u))
        twisted = complex((wh * np.exp(-(1.0 + 1j * ts) * u)).sum())
        worst_plain = max(worst_plain, abs(plain - eta_value(u, spec)))
        worst_twist = max(
            worst_twist, abs(twisted - eta_tilde(u, spec)), abs(twisted.imag)
        )
    return worst_plain, worst_twist


def write_eta_profile_csv(spec: BumpSpec, path) -> None:
    rows = zip(
        spec.u_grid.tolist(),
        spec.eta.tolist(),
        spec.eta_tilde.tolist(),
        spec.eta_tilde_prime.tolist(),
    )
    write_csv(path, ["u", "eta", "eta_tilde", "eta_tilde_prime"], rows)


def write_eta_hat_profile_csv(spec: BumpSpec, path) -> None:
    rows = zip(spec.t_grid.tolist(), spec.eta_hat_grid.tolist())
    write_csv(path, ["t", "eta_hat"], rows)
