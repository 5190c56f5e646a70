"""k-robust ANN by reduction to plain ANN over sampled-coordinate projections.

Build samples L projections, each a concatenation of t D_pr draws with
pr = 1/(c1*k), and indexes every projected copy of the data with a base ANN
backend. A query asks each backend for its ANN and returns the candidate
with the smallest exact robust distance.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .base_ann import EXACT_SCAN, AnnBackend, AnnBackendSpec, build_backend
from .core import LightHeavyParams, ParameterError, as_point, as_points, tail_rows
from .projections import Projection, SamplingConfig, apply, blocks_for, sample_projection

log = logging.getLogger(__name__)

CONSTANT_FACTOR = "constant_factor"
EPS_APPROX = "eps_approx"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RANN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RobustIndexConfig:
    k: int
    p: float = 1.0
    delta: float = 0.5
    c: float = 1.0
    mode: str = CONSTANT_FACTOR
    eps: float = 0.5
    L_scale: float = 1.0
    seed: int = 0
    backend: AnnBackendSpec = field(default_factory=AnnBackendSpec)

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ParameterError("k must be non-negative")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if self.c < 1:
            raise ParameterError("c must be >= 1")
        if self.mode not in (CONSTANT_FACTOR, EPS_APPROX):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == EPS_APPROX:
            if not 0 < self.eps < 1:
                raise ParameterError("eps must lie in (0, 1)")
            if self.p != 1:
                raise ParameterError("eps_approx mode is defined for p = 1 only")
        if not self.L_scale > 0:
            raise ParameterError("L_scale must be positive")


@dataclass(frozen=True)
class SamplingPlan:
    """Constants bound for a dataset of n points."""

    c2: float
    c1: float
    pr: float
    t: int
    L: int
    ann_quality: float
    lam: float | None = None
    xi: float | None = None

    def sampling_config(self, seed: int, stream_id: int) -> SamplingConfig:
        return SamplingConfig(pr=self.pr, t=self.t, seed=seed, stream_id=stream_id)


def plan(n: int, cfg: RobustIndexConfig) -> SamplingPlan:
    if n < 1:
        raise ParameterError("empty point set")
    ln_n = math.log(n)
    if cfg.k == 0:
        # every projection is the identity: a single plain ANN structure suffices
        return SamplingPlan(c2=0.0, c1=0.0, pr=1.0, t=1, L=1, ann_quality=cfg.c, lam=max(128 / cfg.delta, 16 * cfg.c))
    if cfg.mode == CONSTANT_FACTOR:
        c2 = 16.0
        c1 = c2 / cfg.delta
        L = max(1, math.ceil(cfg.L_scale * n**cfg.delta * ln_n))
        lam = max(128 / cfg.delta, 16 * cfg.c)
        return SamplingPlan(c2, c1, 1.0 / (c1 * cfg.k), blocks_for(n, c2), L, cfg.c, lam=lam)
    c2 = 512.0 / cfg.eps**2
    c1 = c2 / cfg.delta
    L = max(1, math.ceil(cfg.L_scale * n**cfg.delta * ln_n / cfg.eps))
    xi = cfg.eps**5 * cfg.delta / (90 * 512 * cfg.k)
    return SamplingPlan(c2, c1, 1.0 / (c1 * cfg.k), blocks_for(n, c2), L, 1 + cfg.eps / 64, xi=xi)


@dataclass
class QueryResult:
    index: int
    distance: float
    candidates: list[int]
    substructures: list[dict[str, Any]]


class RobustIndex:
    def __init__(
        self,
        points: NDArray[np.float64],
        cfg: RobustIndexConfig,
        sampling: SamplingPlan,
        projections: list[Projection],
        backend_specs: list[AnnBackendSpec],
        workers: int | None = None,
    ):
        self.points = points
        self.cfg = cfg
        self.plan = sampling
        self.projections = projections
        self.backend_specs = backend_specs
        self.workers = default_workers() if workers is None else workers
        self.backends: list[AnnBackend] = self._map(self._build_one, range(len(projections)))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def L(self) -> int:
        return len(self.projections)

    def _map(self, fn, items):
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def _build_one(self, j: int) -> AnnBackend:
        return build_backend(apply(self.projections[j], self.points, self.cfg.p), self.backend_specs[j])

    def _subquery(self, args) -> dict[str, Any]:
        j, q = args
        cand, pdist, stats = self.backends[j].query(apply(self.projections[j], q, self.cfg.p))
        return {"structure": j, "candidate": cand, "projected_distance": pdist, **stats}

    def query(self, q: ArrayLike) -> QueryResult:
        qv = as_point(q)
        if qv.shape[0] != self.d:
            raise ParameterError(f"query has d={qv.shape[0]}, index has d={self.d}")
        subs = self._map(self._subquery, [(j, qv) for j in range(self.L)])
        cand = np.unique([s["candidate"] for s in subs])
        dists = tail_rows(self.points[cand] - qv, self.cfg.k, self.cfg.p)
        best = int(np.argmin(dists))  # cand is sorted, so ties resolve to the smallest index
        return QueryResult(int(cand[best]), float(dists[best]), cand.tolist(), subs)

    def light_params(self, r: float) -> LightHeavyParams:
        return light_params(self.cfg, self.plan, r)


def light_params(cfg: RobustIndexConfig, sampling: SamplingPlan, r: float) -> LightHeavyParams:
    """The (psi, level) pair an answer at clean distance r is expected to be light at."""
    k, p = max(cfg.k, 1), cfg.p
    if cfg.mode == EPS_APPROX:
        return LightHeavyParams(psi=sampling.xi * r, level=(1 + 2 * cfg.eps) * r)
    return LightHeavyParams(psi=r / k ** (1 / p), level=(sampling.lam + 1) ** (1 / p) * r)


def _backend_specs(cfg: RobustIndexConfig, sampling: SamplingPlan, L: int) -> list[AnnBackendSpec]:
    base = cfg.backend
    if base.kind == EXACT_SCAN:
        base = replace(base, c=1.0, p=cfg.p)
    else:
        base = replace(base, c=max(1.0, sampling.ann_quality), p=cfg.p)
    return [base.with_seed(cfg.seed * 1_000_003 + j + 1) for j in range(L)]


def build_robust_index(
    P: ArrayLike,
    cfg: RobustIndexConfig,
    projections: list[Projection] | None = None,
    workers: int | None = None,
) -> RobustIndex:
    """Sample L projections (stream ids 1..L) and index each projected copy.

    ``projections`` overrides sampling, which lets tests plant a projection
    with known properties.
    """
    X = as_points(P)
    n, d = X.shape
    sampling = plan(n, cfg)
    if cfg.k == 0:
        log.warning("k=0: robust index degrades to a single plain ANN structure")
    if projections is None:
        if cfg.k == 0:
            projections = [Projection.identity(d)]
        else:
            projections = [sample_projection(d, sampling.sampling_config(cfg.seed, j)) for j in range(1, sampling.L + 1)]
    elif any(pj.source_dim != d for pj in projections):
        raise ParameterError("projection dimension does not match the data")
    return RobustIndex(X, cfg, sampling, list(projections), _backend_specs(cfg, sampling, len(projections)), workers)


def query_robust(idx: RobustIndex, q: ArrayLike) -> QueryResult:
    return idx.query(q)
