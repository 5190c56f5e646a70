"""Plain c-ANN backends used inside each projected copy of the data.

Two kinds share one contract, ``query(q) -> (index, distance, stats)``:

* ``exact_scan``: linear scan, a 1-ANN.
* ``bit_sample_lsh``: bit-sampling LSH over Hamming data. Real-valued data
  is first discretized per coordinate into ``buckets`` levels and sampled
  from its unary (thermometer) code, which turns L1 into Hamming distance
  up to the discretization step.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import ParameterError
from .projections import make_rng

EXACT_SCAN = "exact_scan"
BIT_SAMPLE_LSH = "bit_sample_lsh"


@dataclass(frozen=True)
class AnnBackendSpec:
    kind: str = EXACT_SCAN
    c: float = 1.0
    p: float = 1.0
    n_tables: int = 16
    bits_per_hash: int = 12
    buckets: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (EXACT_SCAN, BIT_SAMPLE_LSH):
            raise ParameterError(f"unknown backend kind {self.kind!r}")
        if self.c < 1:
            raise ParameterError("approximation factor c must be >= 1")
        if self.kind == EXACT_SCAN and self.c != 1:
            raise ParameterError("exact_scan is a 1-ANN; c must be 1")
        if not self.p > 0:
            raise ParameterError("p must be positive")
        if not 1 <= self.bits_per_hash <= 64:
            raise ParameterError("bits_per_hash must be in [1, 64]")
        if self.n_tables < 1 or self.buckets < 2:
            raise ParameterError("n_tables must be >= 1 and buckets >= 2")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AnnBackendSpec":
        return cls(**json.loads(text))

    def with_seed(self, seed: int) -> "AnnBackendSpec":
        return replace(self, seed=int(seed))


def _lp_to_rows(X: NDArray[np.float64], q: NDArray[np.float64], p: float) -> NDArray[np.float64]:
    diff = np.abs(X - q)
    if p == 1:
        return diff.sum(axis=1)
    if p == 2:
        return np.sqrt((diff * diff).sum(axis=1))
    return (diff**p).sum(axis=1) ** (1.0 / p)


class ExactScanBackend:
    def __init__(self, points: NDArray[np.float64], spec: AnnBackendSpec):
        self.points = points
        self.spec = spec

    def __len__(self) -> int:
        return self.points.shape[0]

    def query(self, q: NDArray[np.float64]) -> tuple[int, float, dict[str, Any]]:
        dists = _lp_to_rows(self.points, q, self.spec.p)
        i = int(np.argmin(dists))
        return i, float(dists[i]), {"candidates": len(self), "fallback": False}


class BitSampleLshBackend:
    """L tables keyed on ``bits_per_hash`` sampled (coordinate, threshold) bits."""

    def __init__(self, points: NDArray[np.float64], spec: AnnBackendSpec):
        self.points = points
        self.spec = spec
        n, m = points.shape
        rng = make_rng(spec.seed, 0)
        self.binary = bool(np.all((points == 0) | (points == 1)))
        L, K = spec.n_tables, spec.bits_per_hash
        if m == 0:
            self.coords = np.zeros((L, 0), dtype=np.int64)
            self.thresholds = np.zeros((L, 0))
        else:
            self.coords = rng.integers(0, m, size=(L, K))
            if self.binary:
                self.thresholds = np.full((L, K), 0.5)
            else:
                lo, hi = points.min(axis=0), points.max(axis=0)
                level = rng.integers(1, spec.buckets, size=(L, K))
                self.thresholds = lo[self.coords] + level / spec.buckets * (hi - lo)[self.coords]
        self._weights = (np.uint64(1) << np.arange(self.coords.shape[1], dtype=np.uint64))
        keys = self._keys(points)  # (n, L)
        self._order = np.argsort(keys, axis=0, kind="stable")
        self._sorted = np.take_along_axis(keys, self._order, axis=0)
        n_fallback = max(1, math.isqrt(n))
        self._fallback = np.sort(rng.choice(n, size=min(n, n_fallback), replace=False))

    def __len__(self) -> int:
        return self.points.shape[0]

    def _keys(self, X: NDArray[np.float64]) -> NDArray[np.uint64]:
        # bits: (n, L, K) -> packed uint64 per table
        bits = X[:, self.coords] > self.thresholds
        return (bits.astype(np.uint64) * self._weights).sum(axis=2, dtype=np.uint64)

    def candidates(self, q: NDArray[np.float64]) -> NDArray[np.int64]:
        hq = self._keys(q[None, :])[0]
        found = []
        for j in range(self.coords.shape[0]):
            col = self._sorted[:, j]
            lo = np.searchsorted(col, hq[j], side="left")
            hi = np.searchsorted(col, hq[j], side="right")
            if hi > lo:
                found.append(self._order[lo:hi, j])
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def query(self, q: NDArray[np.float64]) -> tuple[int, float, dict[str, Any]]:
        cand = self.candidates(q)
        fallback = cand.size == 0
        if fallback:
            cand = self._fallback
        dists = _lp_to_rows(self.points[cand], q, self.spec.p)
        j = int(np.argmin(dists))
        return int(cand[j]), float(dists[j]), {"candidates": int(cand.size), "fallback": fallback}


AnnBackend = ExactScanBackend | BitSampleLshBackend


def build_backend(points: ArrayLike, spec: AnnBackendSpec) -> AnnBackend:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ParameterError("backend needs a non-empty (n, d) point set")
    if spec.kind == EXACT_SCAN:
        return ExactScanBackend(X, spec)
    return BitSampleLshBackend(X, spec)


def ann_query(backend: AnnBackend, q: ArrayLike) -> tuple[int, float, dict[str, Any]]:
    qv = np.asarray(q, dtype=np.float64)
    if qv.shape != (backend.points.shape[1],):
        raise ParameterError(f"query dimension {qv.shape} does not match backend d={backend.points.shape[1]}")
    return backend.query(qv)
