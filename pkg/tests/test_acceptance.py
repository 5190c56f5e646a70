"""Acceptance gate: ten criteria, one printed PASS/FAIL line each.

Each test times itself against its runtime limit and asserts every stated
tolerance unchanged.
"""

import math
import time

import numpy as np
import pytest

from robustann.budgeted_index import (
    BudgetedConfig,
    admissible_distance_approx,
    admissible_distance_exact,
    build_budgeted_index,
    is_admissible,
    weighted_light_norm,
)
from robustann.core import NormParams, is_light, robust_nn_bruteforce, tail, tail_sorted
from robustann.ds_lsh import NEAR, DsLshConfig, build_ds_lsh, hamming_distances
from robustann.evaluation import (
    check_basic_exp_var,
    check_collision,
    check_success,
    gen_adversarial,
    gen_bounded_growth,
    gen_hamming_planted,
    gen_planted,
    gen_planted_budgeted,
)
from robustann.robust_index import EPS_APPROX, RobustIndexConfig, build_robust_index

pytestmark = pytest.mark.slow


def report(log, number, title, ok, elapsed, limit, detail):
    verdict = "PASS" if ok else "FAIL"
    log(f"ACCEPTANCE {number:>2} {verdict} {title}: {detail} [{elapsed:.1f}s / limit {limit}s]")


def sort_based_robust_nn(P, q, k):
    best_i, best_d = 0, math.inf
    for i, x in enumerate(P):
        dist = tail_sorted(x - q, k, 1.0)
        if dist < best_d:
            best_i, best_d = i, dist
    return best_i, best_d


def test_01_oracle_equivalence(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for trial in range(1000):
        k = (0, 1, 3, 9)[trial % 4]
        P = rng.normal(size=(50, 10))
        q = rng.normal(size=10)
        i, dist = robust_nn_bruteforce(P, q, NormParams(1.0, k))
        j, ref = sort_based_robust_nn(P, q, k)
        mismatches += i != j or not math.isclose(dist, ref, rel_tol=1e-12, abs_tol=1e-12)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    report(acceptance_log, 1, "oracle equivalence", ok, elapsed, 10, f"{mismatches} mismatches in 1000 instances")
    assert ok


def test_02_basic_expectation_variance(acceptance_log):
    t0 = time.perf_counter()
    checks = check_basic_exp_var(seed=42, d=200, pr=0.1, ps=(1.0, 2.0), m=100_000)
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < 30
    detail = "; ".join(f"{c.name} pred={c.predicted:.4g} meas={c.measured:.4g} se={c.stderr:.3g}" for c in checks)
    report(acceptance_log, 2, "single-block mean/variance", ok, elapsed, 30, detail)
    assert ok


def test_03_success_rare_event(acceptance_log):
    t0 = time.perf_counter()
    c = check_success(seed=42, n=1000, k=8, delta=0.5, m=100_000)
    elapsed = time.perf_counter() - t0
    assert c.details["pr"] == 1 / 256 and c.details["c1"] == 32 and c.details["t"] == 111
    ok = c.passed and elapsed < 60
    report(acceptance_log, 3, "miss probability", ok, elapsed, 60,
           f"measured={c.measured:.4f} target={c.predicted:.4f} exact={c.details['exact']:.4f}")
    assert ok


def test_04_bicriterion_recovery(acceptance_log):
    t0 = time.perf_counter()
    inst = gen_planted(500, 64, 4, 1.0, 10.0, seed=4, n_queries=50)
    idx = build_robust_index(inst.data, RobustIndexConfig(k=4, delta=0.5, c=1.0, seed=4))
    hits, light = 0, 0
    for j, q in enumerate(inst.queries):
        res = idx.query(q)
        hits += res.index == inst.planted[j]
        lh = idx.light_params(inst.r[j])
        assert lh.psi == inst.r[j] / 4 and lh.level == 257 * inst.r[j]
        light += is_light(q - inst.data[res.index], lh, 1.0)
    elapsed = time.perf_counter() - t0
    recall, frac = hits / 50, light / 50
    ok = recall >= 0.9 and frac == 1.0 and elapsed < 120
    report(acceptance_log, 4, "bi-criterion recovery", ok, elapsed, 120, f"recall={recall:.2f} light={frac:.2f}")
    assert ok


def test_05_eps_mode(acceptance_log):
    t0 = time.perf_counter()
    eps, delta, k = 0.5, 0.5, 4
    inst = gen_planted(500, 64, k, 1.0, 10.0, seed=5, n_queries=50)
    idx = build_robust_index(inst.data, RobustIndexConfig(k=k, delta=delta, mode=EPS_APPROX, eps=eps, seed=5))
    # coordinates the guarantee may ignore: k / (delta * eps^5), capped at d
    wide = min(inst.d, math.ceil(k / (delta * eps**5)))
    good, strict = 0, 0
    for j, q in enumerate(inst.queries):
        diff = q - inst.data[idx.query(q).index]
        good += tail(diff, wide, 1.0) <= (1 + 2 * eps) * inst.r[j]
        strict += tail(diff, k, 1.0) <= (1 + 2 * eps) * inst.r[j]
    elapsed = time.perf_counter() - t0
    frac = good / 50
    ok = frac >= 0.95 and elapsed < 180
    report(acceptance_log, 5, "eps-mode distance", ok, elapsed, 180,
           f"fraction={frac:.2f} ignoring {wide} coords; with only k={k} ignored: {strict / 50:.2f}")
    assert ok


def test_06_budgeted_ptas_sandwich(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    bad = 0
    for trial in range(500):
        d = int(rng.integers(1, 13))
        eps = (0.1, 0.5)[trial % 2]
        a, b = rng.normal(size=d) * rng.uniform(0.1, 10), rng.normal(size=d)
        w = rng.uniform(0.01, 1.0, size=d)
        exact, _ = admissible_distance_exact(a, b, w)
        approx, ign = admissible_distance_approx(a, b, w, eps)
        ok_val = exact - 1e-9 <= approx <= (1 + eps) * exact + 1e-9
        bad += not (ok_val and is_admissible(ign, w))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 30
    report(acceptance_log, 6, "PTAS sandwich", ok, elapsed, 30, f"{500 - bad}/500 instances")
    assert ok


def test_07_budgeted_recovery(acceptance_log):
    t0 = time.perf_counter()
    inst = gen_planted_budgeted(500, 64, 1.0, 10.0, seed=7, n_queries=50, profile="random")
    cfg = BudgetedConfig(delta=0.5, eps=0.5, seed=7)
    idx = build_budgeted_index(inst.data, inst.costs, cfg)
    hits, light = 0, 0
    for j, q in enumerate(inst.queries):
        assert inst.costs.costs[inst.corrupted[j]].sum() <= 1 + 1e-9
        res = idx.query(q)
        hits += res.index == inst.planted[j]
        r = inst.r[j]
        light += weighted_light_norm(q - inst.data[res.index], r, inst.costs, cfg.c1) <= 33 * (1 + cfg.eps) * r
    elapsed = time.perf_counter() - t0
    recall, frac = hits / 50, light / 50
    ok = recall >= 0.9 and frac == 1.0 and elapsed < 180
    report(acceptance_log, 7, "budgeted recovery", ok, elapsed, 180, f"recall={recall:.2f} light={frac:.2f}")
    assert ok


def test_08_dslsh_correctness(acceptance_log):
    t0 = time.perf_counter()
    near, early, early_exact = 0, 0, 0
    # 100 trials: 10 independent instances and indexes, 10 queries each
    for s in range(10):
        inst = gen_hamming_planted(1000, 256, 16, seed=800 + s, n_queries=10)
        idx = build_ds_lsh(inst.data, DsLshConfig(r=16, eps=0.5, seed=800 + s))
        for q in inst.queries:
            res = idx.query(q)
            near += res.outcome == NEAR and res.distance <= 24
            if res.stats.level < idx.N:
                early += 1
                nn = int(np.argmin(hamming_distances(inst.data, q)))
                early_exact += res.witness == nn
    elapsed = time.perf_counter() - t0
    ok = near >= 95 and early_exact == early and elapsed < 120
    report(acceptance_log, 8, "DS-LSH correctness", ok, elapsed, 120,
           f"NEAR within (1+eps)r in {near}/100; exact NN in {early_exact}/{early} early stops")
    assert ok


def test_09_dslsh_data_sensitivity(acceptance_log):
    t0 = time.perf_counter()
    n = 1000
    inst = gen_bounded_growth(n, 256, 16, seed=9, n_queries=50)
    idx = build_ds_lsh(inst.data, DsLshConfig(r=16, eps=0.5, seed=9))
    results = [idx.query(q) for q in inst.queries]
    mean_level = float(np.mean([r.stats.level for r in results]))
    mean_scanned = float(np.mean([r.stats.scanned for r in results]))
    adv_levels = []
    for s in range(5):
        adv = gen_adversarial(n, 256, 16, 0.5, seed=900 + s)
        aidx = build_ds_lsh(adv.data, DsLshConfig(r=16, eps=0.5, seed=900 + s))
        adv_levels.append(aidx.query(adv.queries[0]).stats.level)
    adv_mean = float(np.mean(adv_levels))
    elapsed = time.perf_counter() - t0
    ok = mean_level <= 4 and mean_scanned <= 50 * math.log(n) and adv_mean >= idx.N - 1 and elapsed < 120
    report(acceptance_log, 9, "DS-LSH data sensitivity", ok, elapsed, 120,
           f"bounded growth: level={mean_level:.2f} scanned={mean_scanned:.1f} (cap {50 * math.log(n):.0f}); "
           f"adversarial level={adv_mean:.2f} (N={idx.N})")
    assert ok


def test_10_collision_law(acceptance_log):
    t0 = time.perf_counter()
    checks = [check_collision(seed=42, r=16, d=256, ell=ell, i=i, m=10_000) for ell in (4, 16, 64) for i in (1, 3, 5)]
    elapsed = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and elapsed < 30
    detail = " ".join(f"{c.name}:{c.measured:.4g}/{c.predicted:.4g}" for c in checks)
    report(acceptance_log, 10, "collision law", ok, elapsed, 30, detail)
    assert ok
