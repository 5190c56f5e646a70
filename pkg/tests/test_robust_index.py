import logging
import math

import numpy as np
import pytest

from robustann.base_ann import BIT_SAMPLE_LSH, AnnBackendSpec
from robustann.core import NormParams, ParameterError, robust_nn_bruteforce
from robustann.evaluation import gen_planted
from robustann.projections import Projection
from robustann.robust_index import (
    EPS_APPROX,
    RobustIndexConfig,
    build_robust_index,
    plan,
    query_robust,
)


def test_plan_constant_factor_reference_numbers():
    s = plan(1000, RobustIndexConfig(k=8, delta=0.5))
    assert (s.c2, s.c1, s.pr, s.t) == (16.0, 32.0, 1 / 256, 111)
    assert s.L == math.ceil(1000**0.5 * math.log(1000)) == 219
    assert s.lam == 256.0


def test_plan_lambda_uses_c_when_larger():
    assert plan(100, RobustIndexConfig(k=2, c=20.0)).lam == 320.0


def test_plan_eps_mode():
    s = plan(500, RobustIndexConfig(k=4, mode=EPS_APPROX, eps=0.5))
    assert s.c2 == 512 / 0.25 and s.c1 == 2 * s.c2
    assert s.L == math.ceil(500**0.5 * math.log(500) / 0.5)
    assert s.ann_quality == 1 + 0.5 / 64
    assert s.xi == pytest.approx(0.5**5 * 0.5 / (90 * 512 * 4))


def test_config_validation():
    with pytest.raises(ParameterError):
        RobustIndexConfig(k=1, delta=1.0)
    with pytest.raises(ParameterError):
        RobustIndexConfig(k=1, mode=EPS_APPROX, p=2.0)
    with pytest.raises(ParameterError):
        RobustIndexConfig(k=-1)


def test_planted_projection_recovers_neighbor():
    # a single projection that avoids the corrupted coordinate is enough
    P = np.array([[0.1, 0.1, 0.1, 50.0], [1.0, 1.0, 1.0, 0.0], [2.0, 0.0, 2.0, 0.0]])
    q = np.zeros(4)
    proj = Projection.from_mapping(4, {0: 1, 1: 1, 2: 1})
    idx = build_robust_index(P, RobustIndexConfig(k=1), projections=[proj])
    res = query_robust(idx, q)
    assert res.index == 0
    assert res.distance == pytest.approx(0.3)
    assert res.candidates == [0]


def test_query_returns_best_candidate_by_exact_robust_distance():
    rng = np.random.default_rng(4)
    P = rng.normal(size=(60, 10))
    cfg = RobustIndexConfig(k=2, seed=3)
    idx = build_robust_index(P, cfg)
    for q in rng.normal(size=(10, 10)):
        res = idx.query(q)
        cand_d = [robust_nn_bruteforce(P[[c]], q, NormParams(1.0, 2))[1] for c in res.candidates]
        assert res.distance == pytest.approx(min(cand_d))
        assert res.index == res.candidates[int(np.argmin(cand_d))]
        assert len(res.substructures) == idx.L


def test_build_is_deterministic_and_thread_count_invariant():
    inst = gen_planted(200, 32, 2, 1.0, 10.0, seed=1, n_queries=10)
    cfg = RobustIndexConfig(k=2, seed=9)
    a = build_robust_index(inst.data, cfg, workers=1)
    b = build_robust_index(inst.data, cfg, workers=4)
    assert a.projections == b.projections
    assert [a.query(q).index for q in inst.queries] == [b.query(q).index for q in inst.queries]


def test_k_zero_degrades_to_single_structure(caplog):
    X = np.random.default_rng(0).normal(size=(30, 5))
    with caplog.at_level(logging.WARNING):
        idx = build_robust_index(X, RobustIndexConfig(k=0))
    assert idx.L == 1 and "k=0" in caplog.text
    q = X[7] + 0.01
    assert idx.query(q).index == robust_nn_bruteforce(X, q, NormParams(1.0, 0))[0]


def test_light_params_pairs():
    idx = build_robust_index(np.eye(4), RobustIndexConfig(k=4, p=2.0))
    lh = idx.light_params(2.0)
    assert lh.psi == pytest.approx(1.0)
    assert lh.level == pytest.approx(math.sqrt(257) * 2.0)


def test_dimension_mismatch_rejected():
    idx = build_robust_index(np.eye(4), RobustIndexConfig(k=1))
    with pytest.raises(ParameterError):
        idx.query(np.ones(3))
    with pytest.raises(ParameterError):
        build_robust_index(np.eye(4), RobustIndexConfig(k=1), projections=[Projection.identity(5)])


def test_lsh_backend_planted_recall():
    inst = gen_planted(300, 32, 2, 1.0, 10.0, seed=5, n_queries=20)
    cfg = RobustIndexConfig(k=2, seed=2, c=2.0,
                            backend=AnnBackendSpec(kind=BIT_SAMPLE_LSH, c=2.0, n_tables=16, bits_per_hash=8))
    idx = build_robust_index(inst.data, cfg)
    hits = sum(idx.query(q).index == p for q, p in zip(inst.queries, inst.planted))
    assert hits >= 18


def test_p2_planted_recall():
    inst = gen_planted(300, 32, 2, 1.0, 10.0, seed=6, n_queries=20, p=2.0)
    idx = build_robust_index(inst.data, RobustIndexConfig(k=2, p=2.0, seed=1))
    hits = sum(idx.query(q).index == p for q, p in zip(inst.queries, inst.planted))
    assert hits >= 18
