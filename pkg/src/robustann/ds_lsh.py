"""Data-sensitive approximate near-neighbor search on the Hamming cube.

Level i holds N_i hash tables. Each table keys points on a random coordinate
subset in which every coordinate appears with probability 1 - (1 - 1/r)^i, so
two points at distance l collide with probability (1 - 1/r)^(l*i). A query
climbs the levels until the total collision count is at most c3 * N_i, then
scans. Easy queries stop early and get the exact nearest neighbor; at the
last level the scan goes block by block in increasing collision order and
stops at the first point within (1 + eps) * r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ParameterError
from .projections import make_rng

NEAR = "NEAR"
FAR = "FAR"

# tables hashed together per chunk while building; bounds the (n, chunk) scratch matrix
_BUILD_CHUNK = 256


@dataclass(frozen=True)
class DsLshConfig:
    r: int
    eps: float = 0.5
    alpha: float = 8.0
    c3: float = 3.0
    seed: int = 0
    dup_factor: int | None = None
    early_exit: bool = False

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ParameterError("r must be a positive integer")
        if not self.eps > 0:
            raise ParameterError("eps must be positive")
        if not self.c3 > math.e:
            raise ParameterError("c3 must be strictly larger than e")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if self.dup_factor is not None and self.dup_factor < 1:
            raise ParameterError("dup_factor must be >= 1")


def collision_probability(r: int, ell: int, i: int) -> float:
    """(1 - 1/r)^(ell * i): collision chance at distance ell under a level-i key."""
    if r < 1 or ell < 0 or i < 1:
        raise ParameterError("need r >= 1, ell >= 0, i >= 1")
    return (1.0 - 1.0 / r) ** (ell * i)


def inclusion_probability(r: int, i: int) -> float:
    return 1.0 - (1.0 - 1.0 / r) ** i


def level_count(n: int, eps: float) -> int:
    """Number of levels, floor(ln n / (1 + eps)), but at least one."""
    return max(1, math.floor(math.log(n) / (1 + eps)))


def tables_at_level(n: int, r: int, i: int, alpha: float) -> int:
    return math.ceil(alpha * math.log(n) / collision_probability(r, r, i))


def auto_dup_factor(n: int, r: int) -> int:
    """Coordinate duplication needed so the effective radius exceeds ln n."""
    ln_n = math.log(n)
    dup = math.ceil((ln_n + 1) / r) if r <= ln_n else 1
    # r = 1 makes every coordinate part of every key; keep the radius at 2 or more
    return max(dup, math.ceil(2 / r))


def sample_level_masks(d: int, r: int, i: int, count: int, rng: np.random.Generator) -> NDArray[np.bool_]:
    """``count`` coordinate subsets for level i, as a boolean (count, d) matrix."""
    return rng.random((count, d)) < inclusion_probability(r, i)


def hamming_distances(X: NDArray[np.uint8], q: NDArray[np.uint8]) -> NDArray[np.int64]:
    return np.count_nonzero(X != q, axis=1)


def as_binary(P: ArrayLike) -> NDArray[np.uint8]:
    arr = np.asarray(P)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ParameterError("expected an (n, d) binary matrix")
    if not np.all((arr == 0) | (arr == 1)):
        raise ParameterError("Hamming mode requires 0/1 data")
    return arr.astype(np.uint8)


def density_parameter(P: ArrayLike, q: ArrayLike, r: float) -> float:
    """Smallest D >= 0 with sum_i exp(-D * dist(q, p_i) / r) <= 1 (bisection to 1e-6).

    Returns ``inf`` when some point coincides with the query, since that term
    equals 1 for every D.
    """
    X = as_binary(P)
    qv = as_binary(q)[0]
    dist = hamming_distances(X, qv).astype(np.float64)
    if np.any(dist == 0):
        return math.inf
    scaled = dist / r

    def total(delta: float) -> float:
        return float(np.exp(-delta * scaled).sum())

    if total(0.0) <= 1:
        return 0.0
    hi = 1.0
    while total(hi) > 1:
        hi *= 2
    lo = 0.0
    while hi - lo > 1e-7:
        mid = 0.5 * (lo + hi)
        if total(mid) > 1:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass
class Level:
    """Tables of one level, stored column-wise.

    ``keys[:, j]`` are table j's point hashes in sorted order and
    ``order[:, j]`` the matching point indices, so a bucket is a contiguous
    run found by binary search and its size is a difference of offsets.
    """

    i: int
    masks: NDArray[np.bool_]
    weights: NDArray[np.uint64]
    keys: NDArray[np.uint64]
    order: NDArray[np.int32]

    @property
    def n_tables(self) -> int:
        return self.masks.shape[0]


@dataclass
class QueryStats:
    level: int = 0
    levels: int = 0
    collisions: list[int] = field(default_factory=list)
    thresholds: list[float] = field(default_factory=list)
    scanned: int = 0
    raw_scanned: int = 0
    bad_scanned: int = 0
    final_scan: bool = False
    scanned_block_tables: int = 0
    closest: float | None = None

    def as_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class DsLshResult:
    outcome: str
    witness: int | None
    distance: int | None
    stats: QueryStats


def _hash_weights(masks: NDArray[np.bool_], mult: NDArray[np.uint64]) -> NDArray[np.uint64]:
    return np.where(masks, mult, np.uint64(0))


def _hash_rows(X: NDArray[np.uint64], W: NDArray[np.uint64]) -> NDArray[np.uint64]:
    # Linear hash sum_j x_j * m_j (mod 2^64) over each table's coordinates.
    # The m_j are uniform odd words, so distinct keys collide with probability 2^-64.
    return X @ W.T


class DsLshIndex:
    def __init__(self, points: NDArray[np.uint8], cfg: DsLshConfig):
        n, d = points.shape
        if n < 2:
            raise ParameterError("need at least two points")
        self.cfg = cfg
        self.raw_points = points
        self.dup = cfg.dup_factor if cfg.dup_factor is not None else auto_dup_factor(n, cfg.r)
        self.points = self._expand(points)
        self.r_eff = cfg.r * self.dup
        if self.r_eff < 2:
            raise ParameterError("effective radius r * dup_factor must be at least 2")
        self.n = n
        self.d = d
        self.N = level_count(n, cfg.eps)
        self.sizes = [tables_at_level(n, self.r_eff, i, cfg.alpha) for i in range(1, self.N + 1)]
        self.T = max(1, math.ceil(cfg.alpha * math.log(n)))
        rng = make_rng(cfg.seed, 0)
        X64 = self.points.astype(np.uint64)
        self.levels: list[Level] = []
        for i, Ni in enumerate(self.sizes, start=1):
            masks = sample_level_masks(self.points.shape[1], self.r_eff, i, Ni, rng)
            mult = rng.integers(0, 2**63, size=self.points.shape[1], dtype=np.uint64) * np.uint64(2) + np.uint64(1)
            W = _hash_weights(masks, mult)
            keys = np.empty((n, Ni), dtype=np.uint64)
            order = np.empty((n, Ni), dtype=np.int32)
            for s in range(0, Ni, _BUILD_CHUNK):
                h = _hash_rows(X64, W[s : s + _BUILD_CHUNK])
                o = np.argsort(h, axis=0, kind="stable")
                keys[:, s : s + _BUILD_CHUNK] = np.take_along_axis(h, o, axis=0)
                order[:, s : s + _BUILD_CHUNK] = o
            self.levels.append(Level(i, masks, W, keys, order))

    @property
    def threshold_radius(self) -> float:
        """(1 + eps) * r in original (unduplicated) units."""
        return (1 + self.cfg.eps) * self.cfg.r

    def _expand(self, X: NDArray[np.uint8]) -> NDArray[np.uint8]:
        return np.repeat(X, self.dup, axis=-1) if self.dup > 1 else X

    def _bucket_bounds(self, level: Level, q: NDArray[np.uint8]):
        hq = level.weights[:, q.astype(bool)].sum(axis=1, dtype=np.uint64)
        keys = level.keys
        n, m = keys.shape
        cols = np.arange(m)
        # vectorised binary search over all columns at once
        lo = np.zeros(m, dtype=np.int64)
        hi = np.full(m, n, dtype=np.int64)
        while np.any(lo < hi):
            mid = (lo + hi) // 2
            act = lo < hi
            go_right = act & (keys[np.minimum(mid, n - 1), cols] < hq)
            lo = np.where(go_right, mid + 1, lo)
            hi = np.where(act & ~go_right, mid, hi)
        left = lo
        lo = left.copy()
        hi = np.full(m, n, dtype=np.int64)
        while np.any(lo < hi):
            mid = (lo + hi) // 2
            act = lo < hi
            go_right = act & (keys[np.minimum(mid, n - 1), cols] <= hq)
            lo = np.where(go_right, mid + 1, lo)
            hi = np.where(act & ~go_right, mid, hi)
        return left, lo

    def collision_list(self, level_no: int, table: int, q: ArrayLike) -> NDArray[np.int32]:
        """Points sharing q's key in one table (1-based level)."""
        qv = self._expand(as_binary(q)[0])
        level = self.levels[level_no - 1]
        left, right = self._bucket_bounds(level, qv)
        return level.order[left[table] : right[table], table]

    def _gather(self, level: Level, left, right, tables) -> NDArray[np.int64]:
        parts = [level.order[left[j] : right[j], j] for j in tables if right[j] > left[j]]
        return np.concatenate(parts).astype(np.int64) if parts else np.empty(0, dtype=np.int64)

    def query(self, q: ArrayLike) -> DsLshResult:
        qraw = as_binary(q)[0]
        if qraw.shape[0] != self.d:
            raise ParameterError(f"query has d={qraw.shape[0]}, index has d={self.d}")
        qv = self._expand(qraw)
        stats = QueryStats(levels=self.N)
        cut = self.threshold_radius
        for level in self.levels:
            i, Ni = level.i, level.n_tables
            left, right = self._bucket_bounds(level, qv)
            sizes = right - left
            X_i = int(sizes.sum())
            stats.collisions.append(X_i)
            stats.thresholds.append(self.cfg.c3 * Ni)
            stats.level = i
            if self.cfg.early_exit:
                hit = self._early_exit(level, left, sizes, qraw, cut, stats)
                if hit is not None:
                    return hit
            if X_i <= self.cfg.c3 * Ni:
                raw = self._gather(level, left, right, range(Ni))
                stats.raw_scanned += raw.size
                cand = np.unique(raw)
                stats.scanned += cand.size
                if cand.size == 0:
                    return DsLshResult(FAR, None, None, stats)
                dist = hamming_distances(self.raw_points[cand], qraw)
                j = int(np.argmin(dist))
                stats.closest = float(dist[j])
                stats.bad_scanned = int(np.count_nonzero(dist > cut))
                if dist[j] <= cut:
                    return DsLshResult(NEAR, int(cand[j]), int(dist[j]), stats)
                return DsLshResult(FAR, None, None, stats)
            if i == self.N:
                return self._final_scan(level, left, right, qraw, cut, stats)
        raise AssertionError("unreachable: the last level always returns")

    def _early_exit(self, level, left, sizes, qraw, cut, stats):
        # one representative per non-empty list; forfeits the exact-NN property
        nz = np.flatnonzero(sizes)
        if nz.size == 0:
            return None
        reps = np.unique(level.order[left[nz], nz])
        dist = hamming_distances(self.raw_points[reps], qraw)
        stats.scanned += reps.size
        j = int(np.argmin(dist))
        if dist[j] <= cut:
            return DsLshResult(NEAR, int(reps[j]), int(dist[j]), stats)
        return None

    def _final_scan(self, level: Level, left, right, qraw, cut, stats: QueryStats) -> DsLshResult:
        stats.final_scan = True
        sizes = right - left
        blocks = np.array_split(np.arange(level.n_tables), min(self.T, level.n_tables))
        totals = np.array([sizes[b].sum() for b in blocks])
        seen = np.zeros(self.n, dtype=bool)
        for b in np.argsort(totals, kind="stable"):
            stats.scanned_block_tables += blocks[b].size
            for j in blocks[b]:
                if right[j] == left[j]:
                    continue
                lst = level.order[left[j] : right[j], j]
                stats.raw_scanned += lst.size
                fresh = lst[~seen[lst]]
                if fresh.size == 0:
                    continue
                seen[fresh] = True
                dist = hamming_distances(self.raw_points[fresh], qraw)
                stats.scanned += fresh.size
                good = np.flatnonzero(dist <= cut)
                if good.size:
                    g = good[0]
                    stats.bad_scanned += int(np.count_nonzero(dist[:g] > cut))
                    stats.closest = float(dist[g])
                    return DsLshResult(NEAR, int(fresh[g]), int(dist[g]), stats)
                stats.bad_scanned += fresh.size
        return DsLshResult(FAR, None, None, stats)


def build_ds_lsh(P: ArrayLike, cfg: DsLshConfig) -> DsLshIndex:
    return DsLshIndex(as_binary(P), cfg)


def query_ds_lsh(idx: DsLshIndex, q: ArrayLike) -> DsLshResult:
    return idx.query(q)
