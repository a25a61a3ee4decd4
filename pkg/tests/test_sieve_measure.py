"""Weight-table behavior against direct enumeration oracles."""

import math
import random
from types import SimpleNamespace

import numpy as np
import pytest

from roughn_lab.bump_functions import eta_tilde, make_bump
from roughn_lab.errors import EmptySupportError, TableTooSmallError
from roughn_lab.primes_core import build_prime_table
from roughn_lab.sieve_measure import (
    LocalFactorQuery,
    SieveParams,
    axiom_check,
    build_weight_table,
    euler_product_F,
    euler_product_convergence,
    local_factor_E,
    nu_exact,
    parse_params,
    prob_divides,
    sample,
    tiny_prime_rigidity,
    uniqueness_of_k_star_p,
    write_probs_csv,
    write_weights_csv,
)


@pytest.fixture(scope="module")
def spec():
    return make_bump(grid_points=1025, t_points=801, t_max=60.0)


@pytest.fixture(scope="module")
def toy_params():
    # W = 6, R_1 ~ 14.45 so the medium primes are {5, 7, 11, 13}
    return SieveParams(x=10**4, K=1, w=3, a=1, c=0.29, gamma=1.0,
                       T_exponent=0.5, A=2.0, k_max=20)


@pytest.fixture(scope="module")
def toy_table(toy_params, spec):
    return build_weight_table(toy_params, spec)


@pytest.fixture(scope="module")
def prime_table():
    return build_prime_table(10**5)


# --- oracles ---

def trial_factor(m: int) -> dict:
    fs = {}
    d = 2
    while d * d <= m:
        while m % d == 0:
            fs[d] = fs.get(d, 0) + 1
            m //= d
        d += 1
    if m > 1:
        fs[m] = fs.get(m, 0) + 1
    return fs


def nu_unpruned_oracle(n, params, spec):
    """Direct weight: every squarefree w-rough divisor of n+k, no size cut.

    eta_tilde vanishes from 1 on, so divisors at or beyond R_k drop out on
    their own; this is the unpruned side of the pruning invariant.
    """
    if n % params.W:
        return 0.0
    value = 1.0
    for k in range(1, params.K + 1):
        primes = sorted(p for p in trial_factor(n + k) if p > params.w)
        log_r = math.log(params.R(k))
        inner = 1.0
        for mask in range(1, 1 << len(primes)):
            d = 1
            bits = 0
            for i, p in enumerate(primes):
                if mask >> i & 1:
                    d *= p
                    bits += 1
            coef = float(eta_tilde(math.log(d) / log_r, spec))
            inner += -coef if bits % 2 else coef
        value *= inner * inner
    return value


def local_factor_oracle(p, d_star_primes, k_star, ts, tps, params):
    """The three-case local factor recomputed with complex powers of p."""
    if p in d_star_primes:
        hits = [k for k in range(1, params.K + 1) if (k_star - k) % p == 0]
        if not hits:
            return 1.0 / p
        (k,) = hits
        lr = math.log(params.R(k))
        return (1 - p ** -((1 + 1j * ts[k - 1]) / lr)) * (
            1 - p ** -((1 + 1j * tps[k - 1]) / lr)) / p
    acc = 0j
    for k in range(1, params.K + 1):
        lr = math.log(params.R(k))
        acc += p ** -(1 + (1 + 1j * ts[k - 1]) / lr)
        acc += p ** -(1 + (1 + 1j * tps[k - 1]) / lr)
        acc -= p ** -(1 + (2 + 1j * (ts[k - 1] + tps[k - 1])) / lr)
    return 1 - acc


# --- toy windows ---

def test_single_shift_coprime_weight_is_one(spec):
    params = SieveParams(x=10**4, K=1, w=2, a=1, c=0.25, gamma=1.0,
                         T_exponent=0.5, A=2.0, k_max=10)
    assert params.R(1) == pytest.approx(10.0)
    table = build_weight_table(params, spec)
    n = next(n for n in table.support.tolist()
             if all((n + 1) % q for q in (3, 5, 7)))
    assert table.nu_of(n) == 1.0


def test_single_shift_single_prime_factor(spec):
    params = SieveParams(x=10**4, K=1, w=2, a=1, c=0.25, gamma=1.0,
                         T_exponent=0.5, A=2.0, k_max=10)
    table = build_weight_table(params, spec)
    n = next(n for n in table.support.tolist()
             if (n + 1) % 3 == 0 and (n + 1) % 5 and (n + 1) % 7
             and (n + 1) % 9)
    want = (1.0 - float(eta_tilde(math.log(3) / math.log(10), spec))) ** 2
    assert table.nu_of(n) == pytest.approx(want, rel=1e-12)


def test_support_is_multiples_of_w_primorial(toy_table):
    assert toy_table.params.W == 6
    assert set((toy_table.support % 6).tolist()) == {0}
    assert toy_table.support[0] >= toy_table.params.x
    assert toy_table.support[-1] <= 2 * toy_table.params.x


def test_degenerate_schedule_gives_uniform_measure(spec):
    params = SieveParams(x=10**4, K=2, w=5, a=1, c=1e-9, gamma=1.0,
                         T_exponent=0.5, A=2.0, k_max=10)
    table = build_weight_table(params, spec)
    assert table.empty_medium_shifts == (1, 2)
    assert bool((table.nu == 1.0).all())
    assert table.total == float(len(table.support))


# --- pruning, normalization, exactness ---

def test_pruned_vs_unpruned_on_random_support_points(toy_table, toy_params, spec):
    rng = random.Random(17)
    pts = rng.sample(toy_table.support.tolist(), 100)
    for n in pts:
        pruned = nu_exact(n, toy_params, spec)
        unpruned = nu_unpruned_oracle(n, toy_params, spec)
        assert pruned == pytest.approx(unpruned, rel=1e-10, abs=1e-14)
        assert toy_table.nu_of(n) == pytest.approx(unpruned, rel=1e-10, abs=1e-14)


def test_normalization_drift_below_1e12(toy_table):
    drift = abs(math.fsum((toy_table.nu / toy_table.total).tolist()) - 1.0)
    assert drift <= 1e-12


def test_total_is_sum_of_pointwise_weights(toy_table, toy_params, spec):
    direct = math.fsum(nu_exact(int(n), toy_params, spec)
                       for n in toy_table.support[:500])
    table_part = math.fsum(toy_table.nu[:500].tolist())
    assert direct == pytest.approx(table_part, rel=1e-10)


def test_nu_outside_window_raises_and_nu_of_is_zero(toy_table, toy_params, spec):
    with pytest.raises(ValueError):
        nu_exact(toy_params.x - 6, toy_params, spec)
    assert toy_table.nu_of(toy_params.x - 6) == 0.0
    assert toy_table.nu_of(toy_table.support[0] + 1) == 0.0


def test_exact_rational_mode_matches_float_total(toy_params, spec):
    table = build_weight_table(toy_params, spec, exact=True)
    assert table.exact_total is not None
    rel = abs(float(table.exact_total) - table.total) / table.total
    assert rel <= 1e-9
    n = int(table.support[3])
    assert float(table.exact_nu[n]) == pytest.approx(table.nu_of(n), abs=1e-9)


def test_exact_mode_rejects_large_windows(spec):
    params = SieveParams(x=2 * 10**4, K=1, w=3, a=1, c=0.25, gamma=1.0,
                         T_exponent=0.5, A=2.0, k_max=10)
    with pytest.raises(ValueError):
        build_weight_table(params, spec, exact=True)


def test_empty_support_fails_loudly(spec):
    fake = SimpleNamespace(x=10, W=210)
    with pytest.raises(EmptySupportError):
        build_weight_table(fake, spec)


# --- probabilities and sampling ---

def test_prob_divides_unit_modulus(toy_table):
    assert prob_divides(1, 3, toy_table) == 1.0


def test_tiny_prime_rigidity_is_exact(toy_table):
    assert tiny_prime_rigidity(toy_table, k_hi=20) == 0.0


def test_prob_divides_against_hand_count(toy_table):
    d, k = 11, 1
    mask = (toy_table.support + k) % d == 0
    want = math.fsum(toy_table.nu[mask].tolist()) / toy_table.total
    assert prob_divides(d, k, toy_table) == want


def test_monte_carlo_frequencies_within_three_sigma(toy_table):
    draws = sample(toy_table, seed=90210, count=10**5)
    tuples = [(5, 1), (7, 1), (7, 3), (11, 2), (13, 1),
              (35, 1), (55, 2), (65, 1), (77, 3), (143, 2)]
    for d, k in tuples:
        exact = prob_divides(d, k, toy_table)
        freq = float(((draws + k) % d == 0).mean())
        sigma = math.sqrt(exact * (1 - exact) / len(draws))
        assert abs(freq - exact) <= 3 * sigma, (d, k, exact, freq)


def test_sampling_is_deterministic_and_in_support(toy_table):
    a = sample(toy_table, seed=7, count=4096)
    b = sample(toy_table, seed=7, count=4096)
    assert (a == b).all()
    assert np.isin(a, toy_table.support).all()
    assert (sample(toy_table, seed=8, count=4096) != a).any()


# --- local factors ---

def test_local_factor_matches_complex_power_oracle(toy_params):
    rng = random.Random(3)
    for _ in range(50):
        p = rng.choice([5, 7, 11, 13, 17, 19, 23])
        k_star = rng.randint(1, 12)
        t = rng.uniform(-30, 30)
        tp = rng.uniform(-30, 30)
        for d_primes in ((), (p,)):
            q = LocalFactorQuery(k_star=k_star, d_star=p if d_primes else 1,
                                 d_star_primes=d_primes, p=p, t=t, t_prime=tp)
            got = local_factor_E(q, toy_params)
            want = local_factor_oracle(p, set(d_primes), k_star,
                                       [t] * toy_params.K, [tp] * toy_params.K,
                                       toy_params)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-14)


def test_local_factor_no_matching_shift_is_one_over_p(toy_params):
    # K = 1, so p | k_star - k has no solution when p does not divide k_star - 1
    q = LocalFactorQuery(k_star=5, d_star=23, d_star_primes=(23,), p=23)
    assert local_factor_E(q, toy_params) == pytest.approx(1 / 23)


def test_local_factor_bound_on_random_queries(toy_params):
    rng = random.Random(11)
    for _ in range(1000):
        p = rng.choice([5, 7, 11, 13, 17, 19, 23, 29, 31, 97])
        q = LocalFactorQuery(
            k_star=rng.randint(1, 50), d_star=p, d_star_primes=(p,), p=p,
            t=rng.uniform(-60, 60), t_prime=rng.uniform(-60, 60))
        assert abs(local_factor_E(q, toy_params)) <= 4.0 / p + 1e-15


def test_local_factor_rejects_tiny_primes(toy_params):
    q = LocalFactorQuery(k_star=1, d_star=1, d_star_primes=(), p=3)
    with pytest.raises(ValueError):
        local_factor_E(q, toy_params)


def test_shift_uniqueness_exhaustive_scan():
    params = SieveParams(x=10**4, K=3, w=5, a=1, c=0.12, gamma=2.0,
                         T_exponent=0.5, A=2.0, k_max=100)
    for p in range(7, 200):
        if any(p % q == 0 for q in range(2, p)):
            continue
        for k_star in range(1, params.k_max + 1):
            hits = [k for k in range(1, params.K + 1) if (k_star - k) % p == 0]
            assert len(hits) <= 1
            got = uniqueness_of_k_star_p(p, k_star, params)
            assert got == (hits[0] if hits else None)


# --- Euler products ---

def test_euler_product_multiplicative_in_d_star(toy_params, prime_table):
    ts, tps = [0.2], [-0.35]
    base = euler_product_F(ts, tps, 1, toy_params, 4000, prime_table)
    shifted = euler_product_F(ts, tps, 11, toy_params, 4000, prime_table)
    e_in = local_factor_oracle(11, {11}, 1, ts, tps, toy_params)
    e_out = local_factor_oracle(11, set(), 1, ts, tps, toy_params)
    assert shifted == pytest.approx(base / e_out * e_in, rel=1e-12)


def test_euler_product_ratio_isolates_one_factor(toy_params, prime_table):
    ts, tps = [0.4], [0.9]
    upto_31 = euler_product_F(ts, tps, 1, toy_params, 31, prime_table)
    upto_30 = euler_product_F(ts, tps, 1, toy_params, 30, prime_table)
    want = local_factor_oracle(31, set(), 1, ts, tps, toy_params)
    assert upto_31 / upto_30 == pytest.approx(want, rel=1e-12)


def test_euler_product_partials_decrease_at_zero(toy_params, prime_table):
    vals = [abs(euler_product_F([0.0], [0.0], 1, toy_params, cut, prime_table))
            for cut in (50, 200, 1000, 5000, 20000)]
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))


def test_euler_product_convergence_delta_shrinks(toy_params, prime_table):
    _, d1 = euler_product_convergence([0.0], [0.0], 1, toy_params, 2000, prime_table)
    _, d2 = euler_product_convergence([0.0], [0.0], 1, toy_params, 16000, prime_table)
    assert 0 < d2 < d1


def test_euler_product_validates_inputs(toy_params, prime_table):
    with pytest.raises(TableTooSmallError):
        euler_product_F([0.0], [0.0], 1, toy_params, 10**6, prime_table)
    with pytest.raises(ValueError):
        euler_product_F([0.0, 0.0], [0.0], 1, toy_params, 100, prime_table)
    with pytest.raises(ValueError):
        euler_product_F([0.0], [0.0], 12, toy_params, 100, prime_table)


# --- parameter files ---

def test_parse_params_defaults_and_comments():
    params = parse_params("# schedule\nx = 20000\nw = 5  # keep W small\nc = 0.2\n")
    assert params.x == 20000 and params.w == 5 and params.c == 0.2
    assert params.K == 4 and params.gamma == 3.0 and params.k_max == 100


def test_parse_params_rejects_unknown_and_malformed():
    with pytest.raises(ValueError, match="unknown parameter"):
        parse_params("xx = 3\n")
    with pytest.raises(ValueError, match="bad value"):
        parse_params("x = fish\n")


def test_params_validation():
    with pytest.raises(ValueError, match="K < w"):
        SieveParams(x=10**4, K=5, w=3, a=1, c=0.2, gamma=1.0,
                    T_exponent=0.5, A=2.0, k_max=10)
    with pytest.raises(ValueError, match="infeasible"):
        SieveParams(x=100, K=1, w=7, a=1, c=0.3, gamma=1.0,
                    T_exponent=0.5, A=2.0, k_max=10)
    with pytest.raises(ValueError):
        SieveParams(x=10**4, K=1, w=3, a=0, c=0.2, gamma=1.0,
                    T_exponent=0.5, A=2.0, k_max=10)


def test_default_parameter_bundle_is_feasible():
    params = parse_params("")
    assert params.x == 10**7 and params.K == 4 and params.w == 7
    assert params.theta < 1.0
    # x^0.1 ~ 5.0 sits below w = 7, so every default shift clamps to the
    # trivial level and the default measure is uniform on multiples of W
    assert all(r == params.w for r in params.R_values)


# --- axiom reports ---

def test_axiom_a_exact_on_support(toy_table):
    report = axiom_check("A", toy_table)
    assert report.passed and report.detail["support_size"] == len(toy_table.support)


def test_axiom_b_empty_tuple_ratio_is_one(toy_table):
    report = axiom_check("B", toy_table, s=0)
    assert report.detail["sup_ratio"] == 1.0


def test_axiom_b_ratio_finite(toy_table):
    report = axiom_check("B", toy_table, s=2, budget=200, seed=4)
    assert 0 < report.detail["sup_ratio"] < 10.0
    assert report.detail["tuples"] == 200


def test_axiom_c_budget_truncation_flag(toy_table):
    full = axiom_check("C", toy_table, s=2, budget=1000, seed=0)
    cut = axiom_check("C", toy_table, s=2, budget=2, seed=0)
    assert not full.truncated and cut.truncated
    assert full.detail["tuples"] == 6  # C(4 medium primes, 2)
    assert full.detail["c3_fit"] is None or full.detail["c3_fit"] > 0


def test_axiom_d_prime_power_reduction_small(toy_table):
    report = axiom_check("D", toy_table, budget=30, seed=9)
    assert report.detail["tuples"] >= 6
    assert report.detail["max_deviation"] <= 5e-3


def test_axiom_d_requires_admissible_prime_powers(spec):
    params = SieveParams(x=10**4, K=1, w=5, a=1, c=1e-6, gamma=1.0,
                         T_exponent=0.3, A=2.0, k_max=10)
    table = build_weight_table(params, spec)
    with pytest.raises(ValueError, match="T_exponent"):
        axiom_check("D", table, budget=10)


def test_axiom_unknown_name_rejected(toy_table):
    with pytest.raises(ValueError):
        axiom_check("E", toy_table)


# --- emitters ---

def test_weights_csv_layout(tmp_path, toy_table):
    path = tmp_path / "weights.csv"
    write_weights_csv(toy_table, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,nu(n),cumulative-mass"
    assert len(lines) == 1 + len(toy_table.support)
    assert float(lines[-1].split(",")[2]) == pytest.approx(1.0, abs=1e-12)


def test_probs_csv_layout(tmp_path, toy_table):
    path = tmp_path / "probs.csv"
    rows = [(11, 1, prob_divides(11, 1, toy_table), 0.09, 0.001)]
    write_probs_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "d_star,k_star,exact_prob,mc_estimate,mc_sigma"
    assert len(lines) == 2
