"""Single-binary laboratory front end.

Subcommands cover every module: weight-table scans, sampling, moments,
the normalization constant, axiom reports, gap simulations, omega-level
counts, window searches, the downward-shift refuter, and record searches.
Long scans run as fixed chunk sequences with binary checkpoints, so an
interrupted run resumed from its checkpoint produces byte-identical output
to an uninterrupted one.  Exit codes: 0 success, 2 invalid configuration,
3 chunk budget exhausted (checkpoint written, summary flagged partial).
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import pickle
import struct
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import bump_functions, cramer_models, moments_concentration, sieve_measure
from .errors import BudgetExceededError, ResumeMismatchError
from .primes_core import build_prime_table, factor_window, factorize
from .reporting import write_csv, write_json

CHECKPOINT_MAGIC = b"RLCK1"
CHECKPOINT_NAME = "checkpoint.rlck"
SEED_ENV_VAR = "ROUGHN_LAB_SEED"
SUBCOMMANDS = (
    "sieve-scan", "sample", "moments", "c0", "axioms",
    "cramer-gaps", "pik", "window-search", "refute-679", "record-search",
)
CHECKPOINTABLE = ("sieve-scan", "record-search", "cramer-gaps")

SAMPLE_COUNT = 10**5
GAP_N = 10**5
GAP_TRIALS = 100
PIK_GRID = (10**3, 10**4, 10**5, 10**6)

# table-building subcommands use a reduced quadrature grid; the c0 command
# keeps the full default so both routes run at reporting accuracy
_FAST_BUMP = dict(grid_points=1025, t_points=801, t_max=60.0)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params_path: Optional[str]
    out_dir: str
    seed: int
    workers: int
    checkpoint_secs: int
    resume_path: Optional[str]
    max_chunks: Optional[int]


@dataclass(frozen=True)
class Checkpoint:
    subcommand: str
    fingerprint: bytes
    cursor: int
    payload: dict


def config_fingerprint(subcommand: str, seed: int, params_text: str) -> bytes:
    h = hashlib.sha256()
    h.update(subcommand.encode())
    h.update(struct.pack("<q", seed))
    h.update(params_text.encode())
    return h.digest()


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    blob = pickle.dumps(ckpt.payload, protocol=4)
    sub = ckpt.subcommand.encode()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", len(ckpt.fingerprint)))
        fh.write(ckpt.fingerprint)
        fh.write(struct.pack("<H", len(sub)))
        fh.write(sub)
        fh.write(struct.pack("<Q", ckpt.cursor))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (fp_len,) = struct.unpack("<H", fh.read(2))
        fingerprint = fh.read(fp_len)
        (sub_len,) = struct.unpack("<H", fh.read(2))
        subcommand = fh.read(sub_len).decode()
        (cursor,) = struct.unpack("<Q", fh.read(8))
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        payload = pickle.loads(fh.read(blob_len))
    return Checkpoint(subcommand=subcommand, fingerprint=fingerprint,
                      cursor=cursor, payload=payload)


def _run_chunked(
    cfg: RunConfig,
    fingerprint: bytes,
    n_chunks: int,
    init_state: Callable[[], dict],
    run_chunk: Callable[[int, dict], None],
    finalize: Callable[[dict], None],
    partial_summary: Callable[[dict, int], None],
) -> int:
    """Drive a fixed chunk sequence with checkpoint support.

    Chunk boundaries depend only on the configuration, so any interleaving
    of interrupts and resumes accumulates the same state and finalize writes
    the same bytes.
    """
    ckpt_path = Path(cfg.out_dir) / CHECKPOINT_NAME
    if cfg.resume_path:
        ckpt = load_checkpoint(cfg.resume_path)
        if ckpt.fingerprint != fingerprint or ckpt.subcommand != cfg.subcommand:
            raise ResumeMismatchError(
                "checkpoint does not match this configuration; refusing to resume"
            )
        state = ckpt.payload
        start = ckpt.cursor
    else:
        state = init_state()
        start = 0
    done_this_run = 0
    last_save = time.monotonic()
    for i in range(start, n_chunks):
        if cfg.max_chunks is not None and done_this_run >= cfg.max_chunks:
            save_checkpoint(ckpt_path, Checkpoint(cfg.subcommand, fingerprint, i, state))
            partial_summary(state, i)
            print(f"chunk budget reached at {i}/{n_chunks}; checkpoint: {ckpt_path}",
                  file=sys.stderr)
            return 3
        run_chunk(i, state)
        done_this_run += 1
        if cfg.checkpoint_secs > 0 and time.monotonic() - last_save >= cfg.checkpoint_secs:
            save_checkpoint(ckpt_path, Checkpoint(cfg.subcommand, fingerprint, i + 1, state))
            last_save = time.monotonic()
    finalize(state)
    return 0


# --- shared setup ---

def _load_params_text(cfg: RunConfig) -> str:
    if cfg.params_path is None:
        return ""
    path = Path(cfg.params_path)
    if not path.is_file():
        raise FileNotFoundError(f"parameter file not found: {path}")
    return path.read_text()


def _table_setup(params_text: str):
    params = sieve_measure.parse_params(params_text)
    spec = bump_functions.make_bump(**_FAST_BUMP)
    table = sieve_measure.build_weight_table(params, spec)
    return params, spec, table


def _sample_tuples(params: sieve_measure.SieveParams) -> list[tuple[int, int]]:
    """Ten deterministic (d_star, k_star) probes, preferring medium primes."""
    pool = list(params.medium_primes(1))
    if len(pool) < 4:
        cap = max(4 * params.w, 30)
        pool = [p for p in sieve_measure._primes_upto(cap) if p > params.w][:6]
    probes = []
    for i in range(10):
        p = pool[i % len(pool)]
        if i >= len(pool) and len(pool) >= 2:
            q = pool[(i + 1) % len(pool)]
            d = p * q if p != q else p
        else:
            d = p
        probes.append((d, 1 + i % 3))
    return probes


# --- subcommand bodies ---

def _cmd_sieve_scan(cfg: RunConfig, params_text: str, fingerprint: bytes) -> int:
    params, spec, table = _table_setup(params_text)
    out = Path(cfg.out_dir)
    support = table.support
    n_chunks = min(32, len(support))
    bounds = [(len(support) * i // n_chunks, len(support) * (i + 1) // n_chunks)
              for i in range(n_chunks)]
    terms = {k: sieve_measure._admissible_divisors(params, spec, k)
             for k in range(1, params.K + 1)}

    def init_state():
        return {"nu_chunks": [None] * n_chunks}

    def run_chunk(i, state):
        lo, hi = bounds[i]
        ns = support[lo:hi]
        nu = np.ones(len(ns), dtype=np.float64)
        for k in range(1, params.K + 1):
            inner = np.ones(len(ns), dtype=np.float64)
            shifted = ns + k
            for d, coef in terms[k]:
                inner[shifted % d == 0] += coef
            nu *= inner * inner
        state["nu_chunks"][i] = nu.tolist()

    def finalize(state):
        nu = np.array([v for chunk in state["nu_chunks"] for v in chunk])
        total = math.fsum(nu.tolist())
        cum = np.cumsum(nu) / total
        write_csv(out / "weights.csv", ["n", "nu(n)", "cumulative-mass"],
                  zip(support.tolist(), nu.tolist(), cum.tolist()))
        write_json(out / "sieve_summary.json", {
            "params": params.as_dict(),
            "W": params.W,
            "support_size": len(support),
            "total_mass": total,
            "theta": params.theta,
            "empty_medium_shifts": list(table.empty_medium_shifts),
            "partial": False,
        })

    def partial_summary(state, cursor):
        write_json(out / "sieve_summary.json", {
            "params": params.as_dict(),
            "completed_chunks": cursor,
            "of_chunks": n_chunks,
            "partial": True,
        })

    return _run_chunked(cfg, fingerprint, n_chunks, init_state, run_chunk,
                        finalize, partial_summary)


def _cmd_sample(cfg: RunConfig, params_text: str) -> int:
    params, spec, table = _table_setup(params_text)
    out = Path(cfg.out_dir)
    draws = sieve_measure.sample(table, cfg.seed, SAMPLE_COUNT)
    write_csv(out / "samples.csv", ["draw", "n"],
              ((i, int(n)) for i, n in enumerate(draws)))
    rows = []
    for d, k in _sample_tuples(params):
        exact = sieve_measure.prob_divides(d, k, table)
        freq = float(((draws + k) % d == 0).mean())
        sigma = math.sqrt(max(exact * (1.0 - exact), 1e-300) / len(draws))
        rows.append((d, k, exact, freq, sigma))
    sieve_measure.write_probs_csv(rows, out / "probs.csv")
    write_json(out / "sample_summary.json", {
        "count": len(draws),
        "seed": cfg.seed,
        "all_divisible_by_W": bool(np.all(draws % params.W == 0)),
        "within_3_sigma": sum(1 for d, k, e, f, s in rows if abs(f - e) <= 3 * s),
        "tuples": len(rows),
    })
    return 0


def _cmd_moments(cfg: RunConfig, params_text: str) -> int:
    params, spec, table = _table_setup(params_text)
    out = Path(cfg.out_dir)
    reports = []
    for k in (1, 2, 3):
        for tag in ("medium", "large"):
            for s in (1, 2, 4):
                reports.append(moments_concentration.exact_centered_moment(
                    table, k, tag, s))
    moments_concentration.write_moments_csv(reports, out / "moments.csv")
    kappa = moments_concentration.stirling_bound_kappa()
    c3 = moments_concentration.fit_c3(reports)
    constants = moments_concentration.validate_constants(2.0**21 * math.e, 3.0, 3.0)
    moments_concentration.write_constants_json(out / "constants.json", kappa, c3, constants)
    return 0


def _cmd_c0(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    spec = bump_functions.make_bump()
    res = bump_functions.c0_compute(spec)
    rel = abs(res.c0_time - res.c0_freq) / abs(res.c0_time)
    write_json(out / "c0_report.json", {
        "c0_time": res.c0_time,
        "c0_freq": res.c0_freq,
        "relative_difference": rel,
        "err_time": res.err_time,
        "err_freq": res.err_freq,
        "at_least_one": res.c0_time >= 1.0 - 1e-9,
    })
    bump_functions.write_eta_profile_csv(spec, out / "eta_profile.csv")
    bump_functions.write_eta_hat_profile_csv(spec, out / "eta_hat_profile.csv")
    return 0


def _cmd_axioms(cfg: RunConfig, params_text: str) -> int:
    params, spec, table = _table_setup(params_text)
    out = Path(cfg.out_dir)
    payload = {}
    for which, kwargs in (("A", {}), ("B", dict(s=2, budget=200)),
                          ("C", dict(s=2, budget=500)), ("D", dict(budget=50))):
        try:
            rep = sieve_measure.axiom_check(which, table, seed=cfg.seed, **kwargs)
            payload[which] = {"passed": rep.passed, "truncated": rep.truncated,
                              "detail": _jsonable(rep.detail)}
        except ValueError as exc:
            payload[which] = {"passed": False, "error": str(exc)}
    write_json(out / "axioms.json", payload)
    return 0


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _cmd_cramer_gaps(cfg: RunConfig, fingerprint: bytes) -> int:
    out = Path(cfg.out_dir)
    base = cramer_models.CramerConfig(rate="log", N=GAP_N, trials=GAP_TRIALS,
                                      seed=cfg.seed)
    warmup = base.warmup_index()

    def init_state():
        return {"rows": [None] * GAP_TRIALS, "maxes": [None] * GAP_TRIALS,
                "gap_sum": [0.0] * GAP_TRIALS, "gap_n": [0] * GAP_TRIALS}

    def run_chunk(t, state):
        one = cramer_models.CramerConfig(rate="log", N=GAP_N, trials=1,
                                         seed=cfg.seed ^ t, warmup=warmup)
        rep = cramer_models.simulate_gaps(one, keep_gaps=True)
        state["rows"][t] = [(t,) + row[1:] for row in rep.gap_rows]
        state["maxes"][t] = rep.max_ratios[0]
        state["gap_sum"][t] = rep.mean_gap * rep.gap_count if rep.gap_count else 0.0
        state["gap_n"][t] = rep.gap_count

    def finalize(state):
        rows = [row for chunk in state["rows"] for row in chunk]
        write_csv(out / "gaps.csv", ["trial", "k", "S_k", "gap", "ratio"], rows)
        maxes = state["maxes"]
        finite = [m for m in maxes if m is not None and not math.isnan(m)]
        total_gaps = sum(state["gap_n"])
        write_json(out / "gap_report.json", {
            "trials": GAP_TRIALS,
            "N": GAP_N,
            "warmup": warmup,
            "seed": cfg.seed,
            "max_ratios": maxes,
            "trials_with_max_ratio_le_1.5": sum(1 for m in finite if m <= 1.5),
            "mean_gap": (sum(state["gap_sum"]) / total_gaps) if total_gaps else None,
            "gap_count": total_gaps,
            "partial": False,
        })

    def partial_summary(state, cursor):
        write_json(out / "gap_report.json", {
            "trials": GAP_TRIALS, "completed_trials": cursor, "partial": True,
        })

    return _run_chunked(cfg, fingerprint, GAP_TRIALS, init_state, run_chunk,
                        finalize, partial_summary)


def _cmd_pik(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    rows = []
    identities = {}
    for x in PIK_GRID:
        for k in (1, 2, 3, 4):
            rows.extend(cramer_models.density_profile([x], k=k))
        total = sum(cramer_models.count_pi_k(x, k) for k in range(1, 12))
        identities[str(x)] = (total == x - 1)
    cramer_models.write_pik_csv(rows, out / "pik.csv")
    write_json(out / "pik_report.json", {
        "partition_identity": identities,
        "pi_2_of_30": cramer_models.count_pi_k(30, 2),
    })
    return 0


def _cmd_window_search(cfg: RunConfig, params_text: str) -> int:
    params = sieve_measure.parse_params(params_text)
    out = Path(cfg.out_dir)
    x = params.x
    hits = [
        cramer_models.window_search(x, "A-omega", epsilon=0.8, C=2.0),
        cramer_models.window_search(x, "A-omega", epsilon=1.2, C=2.0),
        cramer_models.window_search(x, "B-Omega", epsilon=0.5, C=2.0),
        cramer_models.window_search(x, "B-Omega", epsilon=1.0, C=2.0),
        cramer_models.window_search(x, "weak", C0=2.0, d=1.5),
        cramer_models.window_search(x, "weak", C0=1.2, d=1.01),
    ]
    cramer_models.write_witness_csv(hits, out / "witness.csv")
    return 0


def _cmd_refute_679(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    res = cramer_models.erdos_style_refuter(10**8 + 7, 0.01, budget=10**5,
                                            C0=2.0, d=1.5)
    write_json(out / "refute679.json", {
        "n": res.n, "delta": res.delta, "k": res.k,
        "omega_value": res.omega_value, "threshold": res.threshold,
        "searched_up_to": res.searched_up_to, "chain": _jsonable(res.chain),
    })
    return 0


def _cmd_record_search(cfg: RunConfig, params_text: str, fingerprint: bytes) -> int:
    params, spec, table = _table_setup(params_text)
    out = Path(cfg.out_dir)
    support = table.support
    k_max = params.k_max
    n_chunks = min(16, len(support))
    bounds = [(len(support) * i // n_chunks, len(support) * (i + 1) // n_chunks)
              for i in range(n_chunks)]
    ptable = build_prime_table(math.isqrt(int(support[-1]) + k_max) + 1)

    def init_state():
        return {"ratio_chunks": [None] * n_chunks}

    def run_chunk(i, state):
        lo_i, hi_i = bounds[i]
        ns = support[lo_i:hi_i]
        lo = int(ns[0]) + 2
        hi = int(ns[-1]) + k_max
        window = factor_window(lo, hi, ptable)
        worst = np.zeros(len(ns), dtype=np.float64)
        for k in range(2, k_max + 1):
            idx = (ns + k) - lo
            om = window.big_omega[idx]
            np.maximum(worst, om / math.log(k), out=worst)
        state["ratio_chunks"][i] = worst.tolist()

    def finalize(state):
        ratios = np.array([v for chunk in state["ratio_chunks"] for v in chunk])
        best_idx = int(np.argmin(ratios))
        draws = sieve_measure.sample(table, cfg.seed, SAMPLE_COUNT)
        drawn_idx = np.unique((draws - support[0]) // params.W).astype(np.int64)
        samp_pos = drawn_idx[int(np.argmin(ratios[drawn_idx]))]
        witness = int(support[samp_pos])
        profile_rows = []
        for k in range(2, k_max + 1):
            om = factorize(witness + k, ptable).big_omega()
            profile_rows.append((k, om, math.log(k), om / math.log(k)))
        write_csv(out / "omega_profile.csv", ["k", "Omega", "log_k", "ratio"],
                  profile_rows)
        write_json(out / "record_search.json", {
            "exhaustive": {"witness": int(support[best_idx]),
                           "value": float(ratios[best_idx])},
            "sampled": {"witness": witness, "value": float(ratios[samp_pos])},
            "sample_count": SAMPLE_COUNT,
            "distinct_support_points_sampled": int(len(drawn_idx)),
            "value_ratio_sampled_over_exhaustive":
                float(ratios[samp_pos] / ratios[best_idx]),
            "k_max": k_max,
            "seed": cfg.seed,
            "partial": False,
        })

    def partial_summary(state, cursor):
        write_json(out / "record_search.json", {
            "completed_chunks": cursor, "of_chunks": n_chunks, "partial": True,
        })

    return _run_chunked(cfg, fingerprint, n_chunks, init_state, run_chunk,
                        finalize, partial_summary)


# --- entry point ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughn-lab",
        description="weighted-measure laboratory for prime-factor statistics",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--params", help="parameter file (flat key=value)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=0,
                        help=f"base seed (env {SEED_ENV_VAR} overrides)")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker hint; results never depend on it")
    parser.add_argument("--checkpoint-secs", type=int, default=300,
                        help="write a checkpoint after this many seconds (0 disables)")
    parser.add_argument("--resume", help="resume from a checkpoint file")
    parser.add_argument("--max-chunks", type=int, default=None,
                        help="stop after N chunks with a checkpoint (exit 3)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    seed = args.seed
    if SEED_ENV_VAR in os.environ:
        try:
            seed = int(os.environ[SEED_ENV_VAR])
        except ValueError:
            print(f"{SEED_ENV_VAR} must be an integer", file=sys.stderr)
            return 2
    cfg = RunConfig(
        subcommand=args.subcommand,
        params_path=args.params,
        out_dir=args.out,
        seed=seed,
        workers=args.workers,
        checkpoint_secs=args.checkpoint_secs,
        resume_path=args.resume,
        max_chunks=args.max_chunks,
    )
    try:
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        params_text = _load_params_text(cfg)
        fingerprint = config_fingerprint(cfg.subcommand, cfg.seed, params_text)
        if cfg.subcommand == "sieve-scan":
            return _cmd_sieve_scan(cfg, params_text, fingerprint)
        if cfg.subcommand == "sample":
            return _cmd_sample(cfg, params_text)
        if cfg.subcommand == "moments":
            return _cmd_moments(cfg, params_text)
        if cfg.subcommand == "c0":
            return _cmd_c0(cfg)
        if cfg.subcommand == "axioms":
            return _cmd_axioms(cfg, params_text)
        if cfg.subcommand == "cramer-gaps":
            return _cmd_cramer_gaps(cfg, fingerprint)
        if cfg.subcommand == "pik":
            return _cmd_pik(cfg)
        if cfg.subcommand == "window-search":
            return _cmd_window_search(cfg, params_text)
        if cfg.subcommand == "refute-679":
            return _cmd_refute_679(cfg)
        if cfg.subcommand == "record-search":
            return _cmd_record_search(cfg, params_text, fingerprint)
        print(f"unknown subcommand {cfg.subcommand}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError, ResumeMismatchError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2


def checkpoint_roundtrip(
    subcommand: str,
    out_root,
    interrupt_points: list[int],
    params_path: Optional[str] = None,
    seed: int = 0,
) -> dict:
    """Run once uninterrupted and once with forced interrupts, then compare.

    interrupt_points are per-invocation chunk budgets; the final invocation
    runs unbudgeted to completion.  Returns the per-file byte equality map.
    """
    if subcommand not in CHECKPOINTABLE:
        raise ValueError(f"{subcommand} does not support checkpoints")
    root = Path(out_root)
    dir_a = root / "uninterrupted"
    dir_b = root / "interrupted"
    dir_a.mkdir(parents=True, exist_ok=True)
    dir_b.mkdir(parents=True, exist_ok=True)
    base = [subcommand, "--seed", str(seed), "--checkpoint-secs", "0"]
    if params_path:
        base += ["--params", str(params_path)]
    rc = main(base + ["--out", str(dir_a)])
    if rc != 0:
        raise RuntimeError(f"uninterrupted run failed with exit {rc}")
    resume = None
    for budget in interrupt_points:
        argv = base + ["--out", str(dir_b), "--max-chunks", str(budget)]
        if resume:
            argv += ["--resume", str(resume)]
        rc = main(argv)
        if rc == 0:
            break
        if rc != 3:
            raise RuntimeError(f"interrupted run failed with exit {rc}")
        resume = dir_b / CHECKPOINT_NAME
    else:
        argv = base + ["--out", str(dir_b)]
        if resume:
            argv += ["--resume", str(resume)]
        rc = main(argv)
        if rc != 0:
            raise RuntimeError(f"final resume failed with exit {rc}")
    files = {}
    for path_a in sorted(dir_a.iterdir()):
        if path_a.name == CHECKPOINT_NAME:
            continue
        path_b = dir_b / path_a.name
        files[path_a.name] = path_b.is_file() and (
            path_a.read_bytes() == path_b.read_bytes())
    return {"identical": all(files.values()) and bool(files), "files": files}


if __name__ == "__main__":
    sys.exit(main())
