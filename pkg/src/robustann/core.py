"""Robust distances: tails, truncated norms, light/heavy tests and the
brute-force k-robust nearest-neighbor oracle.

Coordinates are 0-based throughout. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


class ParameterError(ValueError):
    """Raised for invalid parameters or malformed input data."""


@dataclass(frozen=True)
class NormParams:
    p: float = 1.0
    k: int = 0

    def __post_init__(self) -> None:
        if not self.p > 0:
            raise ParameterError(f"p must be positive, got {self.p}")
        if self.k < 0:
            raise ParameterError(f"k must be non-negative, got {self.k}")


@dataclass(frozen=True)
class LightHeavyParams:
    psi: float
    level: float

    def __post_init__(self) -> None:
        if self.psi < 0 or self.level < 0:
            raise ParameterError("psi and level must be non-negative")


def as_point(pt: ArrayLike) -> NDArray[np.float64]:
    """Coerce to a 1-d float64 vector, rejecting NaN/Inf."""
    arr = np.asarray(pt, dtype=np.float64)
    if arr.ndim != 1:
        raise ParameterError(f"expected a 1-d point, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("point contains NaN or Inf")
    return arr


def as_points(P: ArrayLike) -> NDArray[np.float64]:
    """Coerce a dataset to a finite (n, d) float64 matrix."""
    arr = np.asarray(P, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ParameterError(f"expected an (n, d) array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ParameterError("empty point set")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("dataset contains NaN or Inf")
    return arr


def _power_sum(a: NDArray[np.float64], p: float, axis: int = -1) -> NDArray[np.float64]:
    # a holds magnitudes already
    if p == 1:
        return a.sum(axis=axis)
    if p == 2:
        return (a * a).sum(axis=axis)
    return (a**p).sum(axis=axis)


def _root(s, p: float):
    if p == 1:
        return s
    if p == 2:
        return np.sqrt(s)
    return s ** (1.0 / p)


def lp_norm(pt: ArrayLike, p: float) -> float:
    a = np.abs(np.asarray(pt, dtype=np.float64))
    return float(_root(_power_sum(a, p), p))


def _check_k(k: int, d: int) -> None:
    if k < 0 or k > d:
        raise ParameterError(f"k must be in [0, {d}], got {k}")


def tail_magnitudes(pt: ArrayLike, k: int) -> NDArray[np.float64]:
    """The d-k smallest coordinate magnitudes of ``pt``, in no particular order.

    Uses ``np.partition`` (introselect), so this is linear in d.
    """
    a = np.abs(np.asarray(pt, dtype=np.float64))
    d = a.shape[-1]
    _check_k(k, d)
    if k == 0:
        return a
    if k == d:
        return a[..., :0]
    return np.partition(a, d - k - 1, axis=-1)[..., : d - k]


def tail(pt: ArrayLike, k: int, p: float) -> float:
    """L_p norm of ``pt`` after zeroing its k largest-magnitude coordinates."""
    if not p > 0:
        raise ParameterError(f"p must be positive, got {p}")
    rest = tail_magnitudes(pt, k)
    return float(_root(_power_sum(rest, p), p))


def tail_rows(diffs: ArrayLike, k: int, p: float) -> NDArray[np.float64]:
    """Row-wise :func:`tail` for an (n, d) matrix of difference vectors."""
    rest = tail_magnitudes(np.atleast_2d(diffs), k)
    return _root(_power_sum(rest, p, axis=-1), p)


def tail_sorted(pt: ArrayLike, k: int, p: float) -> float:
    """Sort-based reference for :func:`tail` (O(d log d)); used by tests."""
    a = np.sort(np.abs(np.asarray(pt, dtype=np.float64)))
    _check_k(k, a.size)
    rest = a[: a.size - k]
    return float(np.sum(rest**p) ** (1.0 / p)) if rest.size else 0.0


def robust_distances(P: ArrayLike, q: ArrayLike, params: NormParams) -> NDArray[np.float64]:
    """Robust distance from ``q`` to every row of ``P``."""
    X = as_points(P)
    qv = as_point(q)
    if X.shape[1] != qv.shape[0]:
        raise ParameterError(f"dimension mismatch: points have d={X.shape[1]}, query d={qv.shape[0]}")
    _check_k(params.k, X.shape[1])
    return tail_rows(X - qv, params.k, params.p)


def robust_nn_bruteforce(P: ArrayLike, q: ArrayLike, params: NormParams) -> tuple[int, float]:
    """Exact k-robust nearest neighbor of ``q`` in ``P`` by linear scan.

    Ties go to the smallest dataset index. When ``k == d`` every distance is
    zero and index 0 is returned.
    """
    dists = robust_distances(P, q, params)
    i = int(np.argmin(dists))
    return i, float(dists[i])


def remove_coords(pt: ArrayLike, I) -> NDArray[np.float64]:
    """Delete the coordinates listed in ``I``, keeping survivors in order."""
    arr = np.asarray(pt, dtype=np.float64)
    idx = np.asarray(sorted(set(int(i) for i in I)), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= arr.shape[-1]):
        raise ParameterError(f"coordinate index out of range for d={arr.shape[-1]}")
    return np.delete(arr, idx, axis=-1)


def truncated_norm(pt: ArrayLike, psi: float, p: float) -> float:
    """(sum_i min(|pt_i|, psi)^p)^(1/p); ``psi=inf`` disables truncation."""
    if psi < 0:
        raise ParameterError("psi must be non-negative")
    if not p > 0:
        raise ParameterError("p must be positive")
    a = np.minimum(np.abs(np.asarray(pt, dtype=np.float64)), psi)
    return float(_root(_power_sum(a, p), p))


def truncated_norm_rows(diffs: ArrayLike, psi: float, p: float) -> NDArray[np.float64]:
    a = np.minimum(np.abs(np.atleast_2d(np.asarray(diffs, dtype=np.float64))), psi)
    return _root(_power_sum(a, p, axis=-1), p)


def is_light(pt: ArrayLike, lh: LightHeavyParams, p: float) -> bool:
    """True iff the psi-truncated norm is at most ``lh.level`` (boundary counts as light)."""
    return truncated_norm(pt, lh.psi, p) <= lh.level


def is_heavy(pt: ArrayLike, lh: LightHeavyParams, p: float) -> bool:
    return truncated_norm(pt, lh.psi, p) >= lh.level
