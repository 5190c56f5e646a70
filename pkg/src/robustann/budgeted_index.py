"""Budgeted robust ANN under L1: each coordinate carries an ignore-cost in
[0, 1] and any set of total cost at most 1 may be ignored.

The admissible distance between two points is a min-knapsack problem. It is
solved exactly by subset enumeration for small d and approximated within
(1 + eps) by a value-scaling dynamic program otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .base_ann import EXACT_SCAN, AnnBackend, AnnBackendSpec, build_backend
from .core import ParameterError, as_point, as_points
from .projections import Projection, apply, blocks_for, sample_weighted_projection
from .robust_index import default_workers

BUDGET = 1.0
# float slack on the budget comparison; cost sums such as 0.1 + 0.9 may round above 1
BUDGET_TOL = 1e-9
EXACT_MAX_DIM = 24


@dataclass(frozen=True, eq=False)
class CostVector:
    costs: NDArray[np.float64]

    def __post_init__(self) -> None:
        w = np.asarray(self.costs, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ParameterError("cost vector must be a non-empty 1-d array")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise ParameterError("costs must lie in [0, 1]")
        object.__setattr__(self, "costs", w)

    @property
    def d(self) -> int:
        return self.costs.size

    @property
    def support(self) -> NDArray[np.int64]:
        """Original indices of the positive-cost coordinates."""
        return np.flatnonzero(self.costs > 0)

    @property
    def stripped(self) -> NDArray[np.float64]:
        return self.costs[self.support]

    @classmethod
    def uniform(cls, d: int, value: float) -> "CostVector":
        return cls(np.full(d, float(value)))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CostVector) and np.array_equal(self.costs, other.costs)


def _costs(costs) -> NDArray[np.float64]:
    return costs.costs if isinstance(costs, CostVector) else CostVector(np.asarray(costs)).costs


def _gaps(a: ArrayLike, b: ArrayLike, w: NDArray[np.float64]) -> NDArray[np.float64]:
    av, bv = as_point(a), as_point(b)
    if av.shape != bv.shape or av.shape[0] != w.size:
        raise ParameterError("dimension mismatch between points and cost vector")
    return np.abs(av - bv)


def is_admissible(ignored, costs) -> bool:
    w = _costs(costs)
    return float(w[list(ignored)].sum()) <= BUDGET + BUDGET_TOL


def admissible_distance_exact(a: ArrayLike, b: ArrayLike, costs) -> tuple[float, frozenset[int]]:
    """Minimum L1 distance over all admissible ignored sets, by enumeration."""
    w = _costs(costs)
    v = _gaps(a, b, w)
    d = w.size
    if d > EXACT_MAX_DIM:
        raise ParameterError(f"exact admissible distance limited to d <= {EXACT_MAX_DIM}; use the approximation")
    total = float(v.sum())
    bit = np.arange(d, dtype=np.int64)
    best_val, best_mask, best_pop = -1.0, 0, d + 1
    chunk = 1 << 16
    for start in range(0, 1 << d, chunk):
        masks = np.arange(start, min(start + chunk, 1 << d), dtype=np.int64)
        bits = ((masks[:, None] >> bit) & 1).astype(np.float64)
        feasible = bits @ w <= BUDGET + BUDGET_TOL
        dropped = np.where(feasible, bits @ v, -1.0)
        j = int(np.argmax(dropped))
        if dropped[j] < best_val:
            continue
        # among equal values prefer the smallest ignored set
        ties = np.flatnonzero(dropped == dropped[j])
        pops = bits[ties].sum(axis=1)
        jj = int(ties[np.argmin(pops)])
        val, pop = float(dropped[jj]), int(bits[jj].sum())
        if val > best_val or (val == best_val and pop < best_pop):
            best_val, best_mask, best_pop = val, int(masks[jj]), pop
    ignored = frozenset(i for i in range(d) if best_mask >> i & 1 and v[i] > 0)
    return max(0.0, total - float(v[list(ignored)].sum())), ignored


def _greedy_kept(v: NDArray[np.float64], w: NDArray[np.float64]) -> NDArray[np.bool_]:
    """Feasible keep-mask from dropping items greedily by value/cost ratio."""
    keep = np.ones(v.size, dtype=bool)
    room = BUDGET
    for i in np.argsort(-v / w, kind="stable"):
        if w[i] <= room + BUDGET_TOL:
            keep[i] = False
            room -= w[i]
    return keep


def _scaled_keep_dp(v: NDArray[np.float64], w: NDArray[np.float64], need: float, mu: float, cap: int):
    """Minimise sum(floor(v/mu)) over kept sets with kept cost >= need.

    Returns a boolean keep-mask, or None when no set with scaled value <= cap
    meets the requirement.
    """
    s = np.floor(v / mu).astype(np.int64)
    size = min(cap, int(s.sum())) + 1
    best = np.full(size, -np.inf)
    best[0] = 0.0
    take = np.zeros((v.size, size), dtype=bool)
    for i in range(v.size):
        si = s[i]
        if si >= size:
            continue
        cand = np.full(size, -np.inf)
        cand[si:] = best[: size - si] + w[i]
        better = cand > best
        take[i] = better
        best = np.where(better, cand, best)
    ok = np.flatnonzero(best >= need - BUDGET_TOL)
    if ok.size == 0:
        return None
    cur = int(ok[0])
    keep = np.zeros(v.size, dtype=bool)
    for i in range(v.size - 1, -1, -1):
        if take[i, cur]:
            keep[i] = True
            cur -= s[i]
    return keep


def admissible_distance_approx(a: ArrayLike, b: ArrayLike, costs, eps: float) -> tuple[float, frozenset[int]]:
    """Admissible distance within a factor (1 + eps), with an admissible ignored set.

    For each candidate value u of the largest kept gap, gaps above u are
    forced out and the rest go through a knapsack DP on gaps rounded down to
    multiples of eps*u/m. The rounding loses at most eps*u <= eps*OPT when u
    is the true largest kept gap. O(d^4/eps) worst case.
    """
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    w_all = _costs(costs)
    v_all = _gaps(a, b, w_all)
    # zero-cost coordinates are dropped for free; zero gaps are always kept
    items = np.flatnonzero((v_all > 0) & (w_all > 0))
    v, w = v_all[items], w_all[items]
    if v.size == 0 or w.sum() <= BUDGET + BUDGET_TOL:
        return 0.0, frozenset(int(i) for i in np.flatnonzero((v_all > 0)))

    keep = _greedy_kept(v, w)
    best_val, best_keep = float(v[keep].sum()), keep
    w_total = float(w.sum())
    for u in np.unique(v)[::-1]:
        if u > best_val:
            continue  # the largest kept gap never exceeds the optimum
        allowed = v <= u
        forced_cost = w_total - float(w[allowed].sum())
        if forced_cost > BUDGET + BUDGET_TOL:
            break
        sub = np.flatnonzero(allowed)
        need = float(w[sub].sum()) - (BUDGET - forced_cost)
        mu = eps * u / sub.size
        cap = int(math.floor(best_val / mu)) + 1
        sub_keep = _scaled_keep_dp(v[sub], w[sub], need, mu, cap)
        if sub_keep is None:
            continue
        keep = np.zeros(v.size, dtype=bool)
        keep[sub[sub_keep]] = True
        val = float(v[keep].sum())
        if val < best_val:
            best_val, best_keep = val, keep
    dropped = set(int(i) for i in items[~best_keep])
    dropped.update(int(i) for i in np.flatnonzero((w_all == 0) & (v_all > 0)))
    assert float(w_all[list(dropped)].sum()) <= BUDGET + BUDGET_TOL
    return best_val, frozenset(dropped)


def trunc_weighted(pt: ArrayLike, r: float, costs, c1: float) -> NDArray[np.float64]:
    """Cap coordinate i at r / (c1/costs_i - 1)."""
    w = _costs(costs)
    x = np.abs(np.asarray(pt, dtype=np.float64))
    if x.shape != w.shape:
        raise ParameterError("dimension mismatch between point and cost vector")
    if np.any(w <= 0):
        raise ParameterError("trunc_weighted needs strictly positive costs")
    if c1 <= w.max():
        raise ParameterError("c1 must exceed every cost")
    return np.minimum(x, r / (c1 / w - 1.0))


def weighted_light_norm(pt: ArrayLike, r: float, costs, c1: float) -> float:
    """L1 norm of the weighted truncation; zero-cost coordinates truncate to 0."""
    w = _costs(costs)
    sup = np.flatnonzero(w > 0)
    x = np.asarray(pt, dtype=np.float64)
    return float(trunc_weighted(x[sup], r, w[sup], c1).sum())


@dataclass(frozen=True)
class BudgetedConfig:
    delta: float = 0.5
    eps: float = 0.5
    L_scale: float = 1.0
    seed: int = 0
    backend: AnnBackendSpec = field(default_factory=AnnBackendSpec)

    def __post_init__(self) -> None:
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if not 0 < self.eps < 1:
            raise ParameterError("eps must lie in (0, 1)")
        if not self.L_scale > 0:
            raise ParameterError("L_scale must be positive")

    @property
    def c2(self) -> float:
        return 4.0

    @property
    def c1(self) -> float:
        return 2 * self.c2 / self.delta


@dataclass
class BudgetedResult:
    index: int
    distance: float
    ignored: frozenset[int]
    candidates: list[int]
    substructures: list[dict[str, Any]]


class BudgetedIndex:
    def __init__(
        self,
        points: NDArray[np.float64],
        costs: CostVector,
        cfg: BudgetedConfig,
        projections: list[Projection],
        t: int,
        workers: int | None = None,
    ):
        self.points = points
        self.costs = costs
        self.cfg = cfg
        self.projections = projections
        self.t = t
        self.support = costs.support
        self.workers = default_workers() if workers is None else workers
        spec = replace(cfg.backend, p=1.0, c=1.0 if cfg.backend.kind == EXACT_SCAN else max(2.0, cfg.backend.c))
        self.backend_specs = [spec.with_seed(cfg.seed * 1_000_003 + j + 1) for j in range(len(projections))]
        X = points[:, self.support]
        self.backends: list[AnnBackend] = [
            build_backend(apply(pj, X, 1.0), s) for pj, s in zip(projections, self.backend_specs)
        ]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def L(self) -> int:
        return len(self.projections)

    def query(self, q: ArrayLike) -> BudgetedResult:
        qv = as_point(q)
        if qv.shape[0] != self.d:
            raise ParameterError(f"query has d={qv.shape[0]}, index has d={self.d}")
        qs = qv[self.support]
        subs = []
        for j, (pj, be) in enumerate(zip(self.projections, self.backends)):
            cand, pdist, stats = be.query(apply(pj, qs, 1.0))
            subs.append({"structure": j, "candidate": cand, "projected_distance": pdist, **stats})
        cand = np.unique([s["candidate"] for s in subs])
        best = None
        for c in cand:
            val, ign = admissible_distance_approx(qv, self.points[c], self.costs, self.cfg.eps)
            if best is None or val < best[1]:
                best = (int(c), val, ign)
        return BudgetedResult(best[0], best[1], best[2], cand.tolist(), subs)

    def light_level(self, r: float) -> float:
        return 33 * (1 + self.cfg.eps) * r


def budgeted_plan(n: int, cfg: BudgetedConfig) -> tuple[int, int]:
    """(t, L) for n points."""
    t = blocks_for(n, cfg.c2)
    L = max(1, math.ceil(cfg.L_scale * n**cfg.delta * math.log(max(n, 1))))
    return t, L


def build_budgeted_index(P: ArrayLike, costs, cfg: BudgetedConfig, workers: int | None = None) -> BudgetedIndex:
    X = as_points(P)
    cv = costs if isinstance(costs, CostVector) else CostVector(np.asarray(costs))
    if cv.d != X.shape[1]:
        raise ParameterError("cost vector length does not match the data dimension")
    if cv.support.size == 0:
        raise ParameterError("every coordinate has zero cost; all distances are 0")
    t, L = budgeted_plan(X.shape[0], cfg)
    w = cv.stripped
    projections = [sample_weighted_projection(w, cfg.c1, t, cfg.seed, j) for j in range(1, L + 1)]
    return BudgetedIndex(X, cv, cfg, projections, t, workers)


def query_budgeted(idx: BudgetedIndex, q: ArrayLike) -> BudgetedResult:
    return idx.query(q)
