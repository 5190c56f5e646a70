"""Coordinate-sampling projections in compressed (index, multiplicity, scale) form.

A projection is a multiset of coordinates. Only the multiplicity of each
coordinate matters for norms, so a projection is stored as three aligned
arrays instead of the (possibly longer than d) expanded index sequence.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ParameterError, as_point


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based Philox generator keyed on ``(seed, stream_id)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class Projection:
    """Compressed projection of R^d.

    ``indices`` are sorted 0-based coordinates, ``counts`` their
    multiplicities (>= 1) and ``scales`` the per-coordinate factor (all ones
    for unweighted projections).
    """

    source_dim: int
    indices: NDArray[np.int64]
    counts: NDArray[np.int64]
    scales: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64)
        cnt = np.asarray(self.counts, dtype=np.int64)
        sc = np.ones(idx.shape, dtype=np.float64) if self.scales is None else np.asarray(self.scales, dtype=np.float64)
        if not (idx.shape == cnt.shape == sc.shape) or idx.ndim != 1:
            raise ParameterError("indices, counts and scales must be aligned 1-d arrays")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.source_dim:
                raise ParameterError("projection index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ParameterError("projection indices must be strictly increasing")
        if np.any(cnt < 1):
            raise ParameterError("multiplicities must be >= 1")
        if np.any(~(sc > 0)) or not np.all(np.isfinite(sc)):
            raise ParameterError("scales must be positive and finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)
        object.__setattr__(self, "scales", sc)

    @classmethod
    def from_counts(cls, d: int, counts: ArrayLike, scales: ArrayLike | None = None) -> "Projection":
        """Build from a dense length-d multiplicity vector (zeros are dropped)."""
        dense = np.asarray(counts, dtype=np.int64)
        if dense.shape != (d,):
            raise ParameterError(f"expected {d} multiplicities, got shape {dense.shape}")
        idx = np.flatnonzero(dense)
        sc = None if scales is None else np.asarray(scales, dtype=np.float64)[idx]
        return cls(d, idx, dense[idx], sc)

    @classmethod
    def from_mapping(cls, d: int, counts: dict[int, int], scales: dict[int, float] | None = None) -> "Projection":
        idx = np.array(sorted(counts), dtype=np.int64)
        cnt = np.array([counts[i] for i in idx], dtype=np.int64)
        sc = None if scales is None else np.array([scales.get(int(i), 1.0) for i in idx])
        return cls(d, idx, cnt, sc)

    @classmethod
    def identity(cls, d: int) -> "Projection":
        return cls(d, np.arange(d), np.ones(d, dtype=np.int64))

    @property
    def dim(self) -> int:
        """Dimension of the expanded projected space (sum of multiplicities)."""
        return int(self.counts.sum())

    @property
    def weighted(self) -> bool:
        return bool(np.any(self.scales != 1.0))

    def dense_counts(self) -> NDArray[np.int64]:
        out = np.zeros(self.source_dim, dtype=np.int64)
        out[self.indices] = self.counts
        return out

    def misses(self, coords) -> bool:
        """True when none of ``coords`` was sampled."""
        return not np.isin(np.asarray(list(coords), dtype=np.int64), self.indices).any()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Projection):
            return NotImplemented
        return (
            self.source_dim == other.source_dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.scales, other.scales)
        )

    def __repr__(self) -> str:
        return f"Projection(d={self.source_dim}, support={self.indices.size}, dim={self.dim})"

    # Binary record: d:u32, m:u32, then m x (index:u32, count:u32, scale:f64), little-endian.
    _RECORD = np.dtype([("index", "<u4"), ("count", "<u4"), ("scale", "<f8")])

    def to_bytes(self) -> bytes:
        rec = np.empty(self.indices.size, dtype=self._RECORD)
        rec["index"] = self.indices
        rec["count"] = self.counts
        rec["scale"] = self.scales
        return struct.pack("<II", self.source_dim, self.indices.size) + rec.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["Projection", int]:
        """Decode one record starting at ``offset``; returns (projection, next offset)."""
        d, m = struct.unpack_from("<II", buf, offset)
        offset += 8
        size = m * cls._RECORD.itemsize
        rec = np.frombuffer(buf, dtype=cls._RECORD, count=m, offset=offset)
        proj = cls(d, rec["index"].astype(np.int64), rec["count"].astype(np.int64), rec["scale"].astype(np.float64))
        return proj, offset + size


@dataclass(frozen=True)
class SamplingConfig:
    pr: float
    t: int = 1
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.pr <= 1:
            raise ParameterError(f"pr must be in (0, 1], got {self.pr}")
        if self.t < 1:
            raise ParameterError(f"t must be >= 1, got {self.t}")


def sample_projection(d: int, cfg: SamplingConfig) -> Projection:
    """Concatenation of ``cfg.t`` independent D_pr draws, compressed.

    Each coordinate's multiplicity is Binomial(t, pr), drawn directly.
    """
    if d < 1:
        raise ParameterError("d must be >= 1")
    rng = make_rng(cfg.seed, cfg.stream_id)
    return Projection.from_counts(d, rng.binomial(cfg.t, cfg.pr, size=d))


def sample_weighted_projection(costs: ArrayLike, c1: float, t: int, seed: int, stream_id: int) -> Projection:
    """t blocks of the cost-scaled distribution.

    Per block, coordinate i is kept with probability ``costs[i] / c1`` and
    scaled by ``c1 / costs[i]``, so one block is unbiased for the L1 norm and
    t blocks have expected L1 norm ``t * ||pt||_1``.
    """
    w = np.asarray(costs, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ParameterError("costs must be a non-empty vector")
    if np.any(w <= 0):
        raise ParameterError("zero-cost coordinates must be removed before sampling")
    if np.any(w > 1):
        raise ParameterError("costs must lie in (0, 1]")
    if t < 1:
        raise ParameterError("t must be >= 1")
    probs = w / c1
    if np.any(probs > 1):
        raise ParameterError(f"c1={c1} is smaller than some cost; inclusion probability would exceed 1")
    rng = make_rng(seed, stream_id)
    return Projection.from_counts(w.size, rng.binomial(t, probs), scales=c1 / w)


def apply(proj: Projection, pt: ArrayLike, p: float = 1.0) -> NDArray[np.float64]:
    """Project ``pt`` (or each row of a matrix) into compressed coordinates.

    Output coordinate j is ``scale_j * count_j**(1/p) * pt[index_j]``, so the
    L_p norm (and any L_p distance between projected points) equals the one
    of the fully expanded sequence.
    """
    arr = np.asarray(pt, dtype=np.float64)
    if arr.shape[-1] != proj.source_dim:
        raise ParameterError(f"dimension mismatch: projection expects d={proj.source_dim}, got {arr.shape[-1]}")
    return arr[..., proj.indices] * column_weights(proj, p)


def column_weights(proj: Projection, p: float) -> NDArray[np.float64]:
    if p == 1:
        return proj.scales * proj.counts
    return proj.scales * proj.counts ** (1.0 / p)


def projected_distance(proj: Projection, a: ArrayLike, b: ArrayLike, p: float) -> float:
    """||S(a - b)||_p computed on the compressed encoding."""
    av, bv = as_point(a), as_point(b)
    if av.shape != bv.shape:
        raise ParameterError("dimension mismatch between a and b")
    if av.shape[0] != proj.source_dim:
        raise ParameterError("dimension mismatch with projection")
    idx = proj.indices
    diff = np.abs(av[idx] - bv[idx]) * proj.scales
    s = float(np.sum(proj.counts * diff**p))
    return s if p == 1 else s ** (1.0 / p)


def success_probability(pr: float, t: int, k: int) -> float:
    """Exact probability that a t-block D_pr projection misses k fixed coordinates."""
    return (1.0 - pr) ** (k * t)


def expected_multiplicity(pr: float, t: int) -> float:
    return pr * t


def blocks_for(n: int, c2: float) -> int:
    """t = ceil(c2 * ln n), floored at 1."""
    return max(1, math.ceil(c2 * math.log(max(n, 1))))
