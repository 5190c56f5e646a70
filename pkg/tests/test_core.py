import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robustann.core import (
    LightHeavyParams,
    NormParams,
    ParameterError,
    as_points,
    is_heavy,
    is_light,
    lp_norm,
    remove_coords,
    robust_distances,
    robust_nn_bruteforce,
    tail,
    tail_rows,
    tail_sorted,
    truncated_norm,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(1, 12), elements=finite)


def removal_oracle(pt, k, p):
    """Minimum over every k-subset of the norm of the remaining coordinates."""
    best = math.inf
    for I in itertools.combinations(range(len(pt)), k):
        best = min(best, lp_norm(remove_coords(pt, I), p) if len(pt) > k else 0.0)
    return best


def test_tail_hand_examples():
    assert tail([3.0, -1.0, 2.0], 1, 1.0) == 3.0
    assert tail([3.0, -1.0, 2.0], 2, 1.0) == 1.0
    assert tail([3.0, 4.0, 0.0], 0, 2.0) == 5.0
    assert tail([3.0, 4.0], 2, 1.0) == 0.0


def test_tail_k0_is_plain_norm():
    rng = np.random.default_rng(1)
    x = rng.normal(size=30)
    for p in (1.0, 2.0, 3.5):
        assert tail(x, 0, p) == pytest.approx(np.sum(np.abs(x) ** p) ** (1 / p))


@settings(max_examples=200, deadline=None)
@given(vectors, st.sampled_from([1.0, 2.0, 0.5, 3.0]), st.data())
def test_tail_matches_sort_reference(x, p, data):
    k = data.draw(st.integers(0, x.size))
    assert tail(x, k, p) == pytest.approx(tail_sorted(x, k, p), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 7), elements=finite), st.sampled_from([1.0, 2.0]), st.data())
def test_tail_equals_best_coordinate_removal(x, p, data):
    k = data.draw(st.integers(0, x.size))
    assert tail(x, k, p) == pytest.approx(removal_oracle(x, k, p), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(vectors, st.sampled_from([1.0, 2.0]))
def test_tail_non_increasing_in_k(x, p):
    vals = [tail(x, k, p) for k in range(x.size + 1)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_tail_rows_agrees_with_tail():
    rng = np.random.default_rng(2)
    D = rng.normal(size=(20, 9))
    for k in (0, 3, 9):
        np.testing.assert_allclose(tail_rows(D, k, 2.0), [tail(r, k, 2.0) for r in D])


def test_robust_nn_matches_exhaustive_removal():
    rng = np.random.default_rng(3)
    for _ in range(30):
        P = rng.normal(size=(8, 5))
        q = rng.normal(size=5)
        k = int(rng.integers(0, 4))
        i, dist = robust_nn_bruteforce(P, q, NormParams(1.0, k))
        oracle = [removal_oracle(x - q, k, 1.0) for x in P]
        assert dist == pytest.approx(min(oracle))
        assert oracle[i] == pytest.approx(min(oracle))


def test_robust_nn_ties_go_to_smallest_index():
    P = np.array([[5.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert robust_nn_bruteforce(P, [0.0, 0.0], NormParams(1.0, 0)) == (1, 1.0)
    # k = d: all distances zero, index 0 wins
    assert robust_nn_bruteforce(P, [0.0, 0.0], NormParams(1.0, 2)) == (0, 0.0)


def test_robust_nn_ignores_corrupted_coordinate():
    P = np.array([[0.1, 0.1, 100.0], [1.0, 1.0, 0.0]])
    assert robust_nn_bruteforce(P, np.zeros(3), NormParams(1.0, 0))[0] == 1
    assert robust_nn_bruteforce(P, np.zeros(3), NormParams(1.0, 1))[0] == 0


def test_input_validation():
    with pytest.raises(ParameterError):
        as_points([[1.0, np.nan]])
    with pytest.raises(ParameterError):
        as_points(np.empty((0, 3)))
    with pytest.raises(ParameterError):
        tail([1.0, 2.0], 3, 1.0)
    with pytest.raises(ParameterError):
        NormParams(p=0.0)
    with pytest.raises(ParameterError):
        robust_distances(np.ones((2, 3)), np.ones(2), NormParams())
    with pytest.raises(ParameterError):
        remove_coords([1.0, 2.0], [2])


def test_remove_coords_keeps_order():
    np.testing.assert_array_equal(remove_coords([1, 2, 3, 4], [2, 0, 2]), [2.0, 4.0])


def test_truncated_norm_examples():
    assert truncated_norm([5.0, -0.5, 2.0], 1.0, 1.0) == 2.5
    assert truncated_norm([3.0, 4.0], math.inf, 2.0) == 5.0
    assert truncated_norm([3.0, 4.0], 0.0, 2.0) == 0.0


def test_light_heavy_boundary_counts_as_both():
    lh = LightHeavyParams(psi=1.0, level=2.5)
    x = [5.0, -0.5, 2.0]
    assert is_light(x, lh, 1.0) and is_heavy(x, lh, 1.0)
    assert not is_light(x, LightHeavyParams(1.0, 2.4), 1.0)


@settings(max_examples=200, deadline=None)
@given(vectors, st.sampled_from([1.0, 2.0]), st.data())
def test_small_tail_implies_light(x, p, data):
    # ||x||_{k-tail} <= r  =>  (r / k^(1/p), 2^(1/p) r)-light
    k = data.draw(st.integers(1, x.size))
    r = tail(x, k, p)
    if r == 0:
        return
    lh = LightHeavyParams(psi=r / k ** (1 / p), level=2 ** (1 / p) * r * (1 + 1e-12))
    assert is_light(x, lh, p)


@settings(max_examples=200, deadline=None)
@given(vectors, st.sampled_from([1.0, 2.0]), st.floats(0.01, 10), st.floats(0.01, 100))
def test_light_implies_small_tail(x, p, psi, level):
    # at most (level/psi)^p coordinates reach psi, and the rest sum below level
    if is_light(x, LightHeavyParams(psi, level), p):
        m = min(x.size, math.floor((level / psi) ** p))
        assert tail(x, m, p) <= level * (1 + 1e-12)
