"""Planted-corruption generators, ground-truth oracles, metrics and the
statistical checks behind the sampling lemmas.

Every check returns a :class:`StatCheck` carrying the predicted value, the
measured value, its standard error and the verdict.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .budgeted_index import BUDGET, BUDGET_TOL, CostVector
from .core import LightHeavyParams, NormParams, ParameterError, is_light, robust_distances, tail, tail_rows
from .ds_lsh import collision_probability, hamming_distances, sample_level_masks
from .projections import SamplingConfig, blocks_for, make_rng, sample_projection, sample_weighted_projection


@dataclass
class PlantedInstance:
    data: NDArray
    queries: NDArray
    planted: NDArray[np.int64]
    corrupted: list[list[int]]
    r: NDArray[np.float64]
    params: dict[str, Any]
    costs: CostVector | None = None

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def truth_records(self) -> list[dict[str, Any]]:
        return [
            {"query": j, "planted": int(self.planted[j]), "corrupted": self.corrupted[j], "r": float(self.r[j])}
            for j in range(len(self.planted))
        ]


def _signs(rng: np.random.Generator, size) -> NDArray[np.float64]:
    return rng.choice([-1.0, 1.0], size=size)


def gen_planted(
    n: int,
    d: int,
    k: int,
    r: float,
    noise_mag: float,
    seed: int,
    n_queries: int = 50,
    p: float = 1.0,
) -> PlantedInstance:
    """Queries with one planted k-robust neighbor each, at robust distance r.

    The planted neighbor differs from its query by a clean vector of L_p norm
    r spread over d-k coordinates plus noise of magnitude in
    [noise_mag, 2*noise_mag] on k corrupted coordinates. Each decoy sits near
    one query with mass spread over max(4k, 4) coordinates, so it stays at
    robust distance >= 4r even when 2k coordinates are ignored.
    """
    if not 0 <= k < d:
        raise ParameterError(f"need 0 <= k < d, got k={k}, d={d}")
    if r <= 0:
        raise ParameterError("r must be positive")
    if k > 0 and noise_mag < 10 * r / k:
        raise ParameterError(f"noise_mag must be >= 10*r/k = {10 * r / k}")
    if not 1 <= n_queries <= n:
        raise ParameterError("need 1 <= n_queries <= n")
    drop = min(2 * k, d)
    m = min(d, max(4 * k, 4))
    if m - drop < 1:
        raise ParameterError("d too small to place decoys beyond 2k ignored coordinates")

    rng = make_rng(seed, 0)
    spread = 10.0 * (r + noise_mag)
    queries = rng.uniform(0.0, spread, size=(n_queries, d))
    data = np.empty((n, d))
    planted = rng.permutation(n)[:n_queries]
    is_planted = np.zeros(n, dtype=bool)
    is_planted[planted] = True
    corrupted: list[list[int]] = []

    clean_mag = r / (d - k) ** (1.0 / p)
    for j, idx in enumerate(planted):
        coords = rng.permutation(d)
        bad, good = np.sort(coords[:k]), coords[k:]
        delta = np.zeros(d)
        delta[good] = clean_mag * _signs(rng, good.size)
        delta[bad] = noise_mag * (1.0 + rng.random(k)) * _signs(rng, k)
        data[idx] = queries[j] + delta
        corrupted.append(bad.tolist())

    decoys = np.flatnonzero(~is_planted)
    for t, idx in enumerate(decoys):
        home = queries[t % n_queries]
        coords = rng.choice(d, size=m, replace=False)
        a = 4.0 * r * rng.uniform(1.0, 1.5) / (m - drop) ** (1.0 / p)
        delta = np.zeros(d)
        delta[coords] = a * _signs(rng, m)
        data[idx] = home + delta

    params = {"n": n, "d": d, "k": k, "r": r, "noise_mag": noise_mag, "seed": seed, "n_queries": n_queries, "p": p}
    inst = PlantedInstance(data, queries, planted.astype(np.int64), corrupted, np.full(n_queries, float(r)), params)
    _verify_planted(inst, k, p)
    return inst


def _verify_planted(inst: PlantedInstance, k: int, p: float) -> None:
    d = inst.d
    for j, q in enumerate(inst.queries):
        diffs = inst.data - q
        robust = tail_rows(diffs, k, p)
        if int(np.argmin(robust)) != inst.planted[j]:
            raise AssertionError(f"query {j}: planted point is not the robust nearest neighbor")
        wide = tail_rows(np.delete(diffs, inst.planted[j], axis=0), min(2 * k, d), p)
        if wide.min() < 4 * inst.r[j] * (1 - 1e-9):
            raise AssertionError(f"query {j}: decoy margin below 4r")


def admissible_distance_grid(a, b, costs: NDArray[np.float64], grid: int) -> float:
    """Exact admissible L1 distance when every cost is a multiple of 1/grid.

    Knapsack over integer costs: maximise the ignored gap mass subject to
    total integer cost <= grid. Independent of the value-scaling DP.
    """
    v = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    units = np.rint(np.asarray(costs) * grid).astype(np.int64)
    if not np.allclose(units, np.asarray(costs) * grid, atol=1e-9):
        raise ParameterError("costs are not on the requested grid")
    best = np.zeros(grid + 1)
    for vi, ci in zip(v, units):
        if ci == 0:
            best += vi
            continue
        if ci > grid:
            continue
        shifted = np.full(grid + 1, -np.inf)
        shifted[ci:] = best[: grid + 1 - ci] + vi
        best = np.maximum(best, shifted)
    return float(v.sum() - best.max())


def cost_profile(d: int, profile: str, rng: np.random.Generator, k: int = 4) -> tuple[NDArray[np.float64], int]:
    """Cost vector and its grid denominator."""
    if profile == "uniform":
        return np.full(d, 1.0 / k), k
    if profile == "random":
        return rng.integers(10, 101, size=d) / 100.0, 100
    raise ParameterError(f"unknown cost profile {profile!r}")


def gen_planted_budgeted(
    n: int,
    d: int,
    r: float,
    noise_mag: float,
    seed: int,
    n_queries: int = 50,
    profile: str = "random",
    costs: NDArray[np.float64] | None = None,
    grid: int | None = None,
    k: int = 4,
) -> PlantedInstance:
    """Budgeted analogue of :func:`gen_planted`.

    Each planted neighbor is corrupted on a random coordinate set of total
    cost <= 1. Decoys spread mass over enough coordinates that dropping any
    admissible set leaves L1 distance >= 4r.
    """
    if r <= 0 or noise_mag < 10 * r:
        raise ParameterError("need r > 0 and noise_mag >= 10*r")
    rng = make_rng(seed, 0)
    if costs is None:
        w, grid = cost_profile(d, profile, rng, k)
    else:
        w = np.asarray(costs, dtype=np.float64)
        if w.shape != (d,):
            raise ParameterError("cost vector length must equal d")
    cv = CostVector(w)
    pos = np.sort(w[w > 0])
    if pos.size == 0:
        raise ParameterError("all costs are zero")
    # most coordinates any admissible set can drop, plus the free ones
    max_drop = int(np.searchsorted(np.cumsum(pos), BUDGET + BUDGET_TOL, side="right")) + int(np.sum(w == 0))
    m = min(d, max_drop + 16)
    if m - max_drop < 1:
        raise ParameterError("d too small for budgeted decoys")

    spread = 10.0 * (r + noise_mag)
    queries = rng.uniform(0.0, spread, size=(n_queries, d))
    data = np.empty((n, d))
    planted = rng.permutation(n)[:n_queries]
    is_planted = np.zeros(n, dtype=bool)
    is_planted[planted] = True
    corrupted: list[list[int]] = []
    rs = np.empty(n_queries)
    for j, idx in enumerate(planted):
        order = rng.permutation(np.flatnonzero(w > 0))
        spent, bad = 0.0, []
        for c in order:
            if spent + w[c] <= BUDGET + BUDGET_TOL:
                bad.append(int(c))
                spent += w[c]
            if len(bad) >= 1 and rng.random() < 0.15:
                break
        bad_arr = np.array(sorted(bad))
        good = np.setdiff1d(np.arange(d), bad_arr)
        delta = np.zeros(d)
        delta[good] = (r / good.size) * _signs(rng, good.size)
        delta[bad_arr] = noise_mag * (1.0 + rng.random(bad_arr.size)) * _signs(rng, bad_arr.size)
        data[idx] = queries[j] + delta
        corrupted.append(bad_arr.tolist())
        rs[j] = admissible_distance_grid(queries[j], data[idx], w, grid) if grid else r
    decoys = np.flatnonzero(~is_planted)
    for t, idx in enumerate(decoys):
        coords = rng.choice(d, size=m, replace=False)
        a = 4.0 * r * rng.uniform(1.0, 1.5) / (m - max_drop)
        delta = np.zeros(d)
        delta[coords] = a * _signs(rng, m)
        data[idx] = queries[t % n_queries] + delta
    params = {"n": n, "d": d, "r": r, "noise_mag": noise_mag, "seed": seed, "n_queries": n_queries,
              "profile": profile if costs is None else "file", "grid": grid}
    return PlantedInstance(data, queries, planted.astype(np.int64), corrupted, rs, params, costs=cv)


def _flip(rng: np.random.Generator, x: NDArray[np.uint8], count: int) -> NDArray[np.uint8]:
    y = x.copy()
    idx = rng.choice(x.size, size=count, replace=False)
    y[idx] ^= 1
    return y


def gen_hamming_planted(n: int, d: int, r: int, seed: int, n_queries: int = 100, far: float = 4.0) -> PlantedInstance:
    """Random bit vectors; each query has one planted point at Hamming distance r
    and every other point at distance >= far * r."""
    rng = make_rng(seed, 0)
    data = rng.integers(0, 2, size=(n, d), dtype=np.uint8)
    planted = rng.permutation(n)[:n_queries]
    queries = np.empty((n_queries, d), dtype=np.uint8)
    for j, idx in enumerate(planted):
        queries[j] = _flip(rng, data[idx], r)
    for _ in range(100):
        bad = set()
        for j in range(n_queries):
            dist = hamming_distances(data, queries[j])
            close = np.flatnonzero(dist < far * r)
            bad.update(int(i) for i in close if i != planted[j])
        if not bad:
            break
        for i in bad:
            data[i] = rng.integers(0, 2, size=d, dtype=np.uint8)
    else:
        raise ParameterError("could not separate decoys; increase d")
    params = {"n": n, "d": d, "r": r, "seed": seed, "n_queries": n_queries, "far": far}
    return PlantedInstance(data, queries, planted.astype(np.int64), [[] for _ in planted], np.full(n_queries, float(r)), params)


def gen_bounded_growth(n: int, d: int, r: int, seed: int, n_queries: int = 50, shells: int = 4) -> PlantedInstance:
    """Around each query, 2j-1 points at distance j*r for j = 1..shells, so the
    count within distance l grows like (l/r)^2. Remaining points are uniform."""
    per = shells * shells
    if n_queries * per > n:
        raise ParameterError("n too small for the requested shells")
    rng = make_rng(seed, 0)
    data = rng.integers(0, 2, size=(n, d), dtype=np.uint8)
    queries = rng.integers(0, 2, size=(n_queries, d), dtype=np.uint8)
    planted = np.empty(n_queries, dtype=np.int64)
    slot = 0
    for j in range(n_queries):
        for s in range(1, shells + 1):
            for c in range(2 * s - 1):
                data[slot] = _flip(rng, queries[j], s * r)
                if s == 1:
                    planted[j] = slot
                slot += 1
    params = {"n": n, "d": d, "r": r, "seed": seed, "n_queries": n_queries, "shells": shells}
    return PlantedInstance(data, queries, planted, [[] for _ in planted], np.full(n_queries, float(r)), params)


def gen_adversarial(n: int, d: int, r: int, eps: float, seed: int) -> PlantedInstance:
    """One query, one point at distance r and n/2 points just beyond (1+eps)r."""
    rng = make_rng(seed, 0)
    q = rng.integers(0, 2, size=d, dtype=np.uint8)
    data = rng.integers(0, 2, size=(n, d), dtype=np.uint8)
    shell = math.floor((1 + eps) * r) + 1
    for i in range(1, n // 2 + 1):
        data[i] = _flip(rng, q, shell)
    data[0] = _flip(rng, q, r)
    params = {"n": n, "d": d, "r": r, "eps": eps, "seed": seed, "shell": shell}
    return PlantedInstance(data, q[None, :], np.array([0]), [[]], np.array([float(r)]), params)


def bicriterion_report(
    answers: Sequence[int | None],
    instance: PlantedInstance,
    lightness: Callable[[float], LightHeavyParams] | LightHeavyParams,
    params: NormParams,
) -> dict[str, Any]:
    """Recall, light fraction and robust-distance ratio over answered queries.

    ``answers[j]`` is the returned index for query j, or None / -1 when the
    query was not answered. ``lightness`` maps a query's r to its (psi, level)
    pair, or is a fixed pair.
    """
    hits, light, ratios = [], [], []
    for j, a in enumerate(answers):
        if a is None or a < 0:
            continue
        q = instance.queries[j]
        lh = lightness(float(instance.r[j])) if callable(lightness) else lightness
        hits.append(int(a) == int(instance.planted[j]))
        light.append(is_light(q - instance.data[a], lh, params.p))
        dists = robust_distances(instance.data, q, params)
        best = float(dists.min())
        got = float(dists[a])
        ratios.append(1.0 if got == best else (got / best if best > 0 else math.inf))
    m = len(hits)
    return {
        "answered": m,
        "recall": float(np.mean(hits)) if m else math.nan,
        "light_fraction": float(np.mean(light)) if m else math.nan,
        "mean_ratio": float(np.mean(ratios)) if m else math.nan,
    }


@dataclass
class StatCheck:
    name: str
    predicted: float
    measured: float
    stderr: float
    rule: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)

    def as_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["verdict"] = "pass" if self.passed else "fail"
        return rec

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: predicted={self.predicted:.6g} measured={self.measured:.6g} stderr={self.stderr:.3g} ({self.rule})"


def _mean_check(name: str, samples: NDArray[np.float64], predicted: float, z: float = 4.0, **details) -> StatCheck:
    m = samples.size
    se = float(samples.std(ddof=1) / math.sqrt(m))
    measured = float(samples.mean())
    ok = abs(measured - predicted) <= z * se if se > 0 else measured == predicted
    return StatCheck(name, predicted, measured, se, f"|measured-predicted| <= {z:g} stderr", bool(ok), {"samples": m, **details})


def projection_powers(pt: NDArray[np.float64], pr: float, t: int, m: int, seed: int, p: float) -> NDArray[np.float64]:
    """||S pt||_p^p for m independent projections S (stream ids 1..m)."""
    a = np.abs(pt) ** p
    out = np.empty(m)
    for s in range(m):
        proj = sample_projection(pt.size, SamplingConfig(pr=pr, t=t, seed=seed, stream_id=s + 1))
        out[s] = float(np.dot(proj.counts, a[proj.indices]))
    return out


def check_basic_exp_var(
    seed: int = 42, d: int = 200, pr: float = 0.1, ps: Iterable[float] = (1.0, 2.0), m: int = 100_000,
    var_rel_tol: float = 0.10, pr_error: float = 1.0,
) -> list[StatCheck]:
    """Single-block D_pr: mean pr*||pt||_p^p and variance pr(1-pr)*||pt||_{2p}^{2p}.

    ``pr_error`` multiplies the sampling probability only (negative control).
    """
    rng = make_rng(seed, 10_000_019)
    pt = rng.normal(size=d)
    a = np.abs(pt)
    # one set of projections serves every p
    counts = np.empty((m, d), dtype=np.int8)
    for s in range(m):
        proj = sample_projection(d, SamplingConfig(pr=min(1.0, pr * pr_error), t=1, seed=seed, stream_id=s + 1))
        row = np.zeros(d, dtype=np.int8)
        row[proj.indices] = proj.counts
        counts[s] = row
    checks = []
    for p in ps:
        z = counts @ (a**p)
        mean_pred = pr * float(np.sum(a**p))
        var_pred = pr * (1 - pr) * float(np.sum(a ** (2 * p)))
        checks.append(_mean_check(f"basic_exp_var.mean[p={p:g}]", z, mean_pred, d=d, pr=pr))
        var_meas = float(z.var(ddof=1))
        # stderr of the sample variance from the fourth central moment
        c = z - z.mean()
        se_var = float(math.sqrt(max(np.mean(c**4) - var_meas**2, 0.0) / m))
        ok = abs(var_meas - var_pred) <= var_rel_tol * var_pred
        checks.append(StatCheck(f"basic_exp_var.var[p={p:g}]", var_pred, var_meas, se_var,
                                f"relative error <= {var_rel_tol:g}", bool(ok), {"samples": m, "d": d, "pr": pr}))
    return checks


def check_success(seed: int = 42, n: int = 1000, k: int = 8, delta: float = 0.5, m: int = 100_000,
                  d: int = 64, pr_error: float = 1.0) -> StatCheck:
    """Probability that a t-block projection misses k fixed coordinates vs n^(-c2/c1)."""
    c2 = 16.0
    c1 = c2 / delta
    pr = 1.0 / (c1 * k)
    t = blocks_for(n, c2)
    fixed = np.arange(k)
    hits = np.empty(m, dtype=bool)
    for s in range(m):
        proj = sample_projection(d, SamplingConfig(pr=min(1.0, pr * pr_error), t=t, seed=seed, stream_id=s + 1))
        hits[s] = proj.misses(fixed)
    measured = float(hits.mean())
    predicted = n ** (-c2 / c1)
    se = math.sqrt(max(measured * (1 - measured), 1e-300) / m)
    ok = predicted / 2 <= measured <= 2 * predicted
    return StatCheck("success.miss_probability", predicted, measured, se, "within factor 2", bool(ok),
                     {"n": n, "k": k, "c1": c1, "c2": c2, "pr": pr, "t": t, "exact": (1 - pr) ** (k * t), "samples": m})


def _weighted_norms(pt, costs, c1, t, m, seed) -> NDArray[np.float64]:
    a = np.abs(pt)
    out = np.empty(m)
    for s in range(m):
        proj = sample_weighted_projection(costs, c1, t, seed, s + 1)
        out[s] = float(np.sum(proj.counts * proj.scales * a[proj.indices]))
    return out


def check_weighted_single_block(seed: int = 42, d: int = 50, m: int = 100_000) -> StatCheck:
    """One block of the cost-scaled distribution (c1 = 1) is unbiased for ||pt||_1."""
    rng = make_rng(seed, 10_000_021)
    pt = rng.normal(size=d)
    costs = rng.uniform(0.2, 1.0, size=d)
    z = _weighted_norms(pt, costs, 1.0, 1, m, seed)
    return _mean_check("norm1.single_block_mean", z, float(np.abs(pt).sum()), d=d)


def check_weighted_t_blocks(seed: int = 42, d: int = 50, n: int = 1000, delta: float = 0.5, m: int = 100_000) -> StatCheck:
    """t blocks with c1 = 2*c2/delta: mean t*||pt||_1."""
    rng = make_rng(seed, 10_000_023)
    pt = rng.normal(size=d)
    costs = rng.uniform(0.1, 1.0, size=d)
    c2 = 4.0
    c1 = 2 * c2 / delta
    t = blocks_for(n, c2)
    z = _weighted_norms(pt, costs, c1, t, m, seed)
    var_pred = t * float(np.sum(pt**2 * (c1 / costs - 1)))
    return _mean_check("weighted.t_block_mean", z, t * float(np.abs(pt).sum()), t=t, c1=c1,
                       var_predicted=var_pred, var_measured=float(z.var(ddof=1)))


def check_budget_success(seed: int = 42, n: int = 1000, delta: float = 0.5, d: int = 40, m: int = 20_000) -> StatCheck:
    """Probability a t-block weighted projection misses a bad set of cost <= 1."""
    rng = make_rng(seed, 10_000_027)
    costs = rng.uniform(0.05, 1.0, size=d)
    order = rng.permutation(d)
    bad, spent = [], 0.0
    for c in order:
        if spent + costs[c] <= 1.0:
            bad.append(int(c))
            spent += costs[c]
    c2 = 4.0
    c1 = 2 * c2 / delta
    t = blocks_for(n, c2)
    hits = np.empty(m, dtype=bool)
    for s in range(m):
        hits[s] = sample_weighted_projection(costs, c1, t, seed, s + 1).misses(bad)
    measured = float(hits.mean())
    bound = n ** (-2 * c2 / c1)
    se = math.sqrt(max(measured * (1 - measured), 1e-300) / m)
    return StatCheck("budget_success.miss_probability", bound, measured, se, "measured >= bound/2",
                     bool(measured >= bound / 2), {"bad_cost": spent, "t": t, "c1": c1, "samples": m})


def check_collision(seed: int = 42, r: int = 16, d: int = 256, ell: int = 16, i: int = 1, m: int = 10_000) -> StatCheck:
    """Empirical collision rate of two points at Hamming distance ell under level-i keys."""
    rng = make_rng(seed, 10_000_031 + 97 * ell + i)
    differ = rng.choice(d, size=ell, replace=False)
    masks = sample_level_masks(d, r, i, m, rng)
    collide = ~masks[:, differ].any(axis=1)
    predicted = collision_probability(r, ell, i)
    se = math.sqrt(predicted * (1 - predicted) / m)
    measured = float(collide.mean())
    ok = abs(measured - predicted) <= 4 * se
    return StatCheck(f"collision[ell={ell},i={i}]", predicted, measured, se, "|measured-predicted| <= 4 stderr", bool(ok),
                     {"r": r, "d": d, "samples": m})


def lemma_suite(seed: int = 42, scale: float = 1.0, pr_error: float = 1.0) -> list[StatCheck]:
    """All statistical checks at fixed sample sizes (times ``scale``)."""

    def sz(base: int) -> int:
        return max(100, int(base * scale))

    checks = check_basic_exp_var(seed, m=sz(20_000), pr_error=pr_error)
    checks.append(check_success(seed, m=sz(20_000), pr_error=pr_error))
    checks.append(check_weighted_single_block(seed, m=sz(20_000)))
    checks.append(check_weighted_t_blocks(seed, m=sz(20_000)))
    checks.append(check_budget_success(seed, m=sz(5_000)))
    for ell in (4, 16, 64):
        for i in (1, 3, 5):
            checks.append(check_collision(seed, ell=ell, i=i, m=sz(10_000)))
    return checks


def write_jsonl(path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")


def read_jsonl(path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.ndarray, frozenset, set)):
        return sorted(obj.tolist()) if isinstance(obj, np.ndarray) else sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")
