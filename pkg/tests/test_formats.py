import struct

import numpy as np
import pytest

from robustann.budgeted_index import BudgetedConfig, build_budgeted_index
from robustann.ds_lsh import DsLshConfig, build_ds_lsh
from robustann.evaluation import gen_hamming_planted, gen_planted, gen_planted_budgeted
from robustann.formats import (
    FormatError,
    dataset_bytes,
    index_bytes,
    load_index,
    pack_bits,
    parse_dataset,
    parse_index,
    read_costs,
    read_dataset,
    save_index,
    write_costs,
    write_dataset,
)
from robustann.robust_index import RobustIndexConfig, build_robust_index


@pytest.mark.parametrize("elem", ["f64", "f32"])
def test_dense_round_trip(tmp_path, elem):
    X = np.random.default_rng(0).normal(size=(7, 5))
    write_dataset(tmp_path / "x.rann", X, elem)
    Y, got = read_dataset(tmp_path / "x.rann")
    assert got == elem
    np.testing.assert_allclose(Y, X, rtol=1e-6 if elem == "f32" else 0)
    size = 24 + 7 * 5 * (8 if elem == "f64" else 4)
    assert (tmp_path / "x.rann").stat().st_size == size


def test_bit_round_trip_and_layout():
    X = np.zeros((2, 70), dtype=np.uint8)
    X[0, 0] = X[0, 65] = X[1, 63] = 1
    buf = dataset_bytes(X, "bit")
    assert len(buf) == 24 + 2 * 2 * 8
    magic, version, code, n, d = struct.unpack_from("<4sHHQQ", buf)
    assert (magic, version, code, n, d) == (b"RANN", 1, 3, 2, 70)
    words = np.frombuffer(buf[24:], dtype="<u8").reshape(2, 2)
    assert words[0, 0] == 1 and words[0, 1] == 2 and words[1, 0] == 1 << 63
    Y, elem, end = parse_dataset(buf)
    np.testing.assert_array_equal(Y, X)
    assert elem == "bit" and end == len(buf)
    np.testing.assert_array_equal(pack_bits(X), words)


def test_dataset_errors():
    good = dataset_bytes(np.ones((2, 2)))
    with pytest.raises(FormatError, match="magic"):
        parse_dataset(b"XXXX" + good[4:])
    with pytest.raises(FormatError, match="version"):
        parse_dataset(good[:4] + struct.pack("<H", 9) + good[6:])
    with pytest.raises(FormatError, match="truncated"):
        parse_dataset(good[:-1])
    with pytest.raises(FormatError):
        dataset_bytes(np.array([[0, 2]]), "bit")
    bad = bytearray(good)
    bad[24:32] = struct.pack("<d", float("nan"))
    with pytest.raises(FormatError, match="NaN"):
        parse_dataset(bytes(bad))


def test_costs_csv_and_binary(tmp_path):
    w = np.array([0.1, 0.25, 1.0, 0.0])
    write_costs(tmp_path / "c.csv", w)
    write_costs(tmp_path / "c.bin", w, binary=True)
    np.testing.assert_array_equal(read_costs(tmp_path / "c.csv").costs, w)
    np.testing.assert_array_equal(read_costs(tmp_path / "c.bin").costs, w)
    (tmp_path / "bad.csv").write_text("0.1,abc\n")
    with pytest.raises(FormatError):
        read_costs(tmp_path / "bad.csv")


def _robust():
    inst = gen_planted(120, 16, 2, 1.0, 10.0, seed=1, n_queries=8)
    return inst, build_robust_index(inst.data, RobustIndexConfig(k=2, seed=4))


def test_robust_index_round_trip(tmp_path):
    inst, idx = _robust()
    save_index(tmp_path / "a.ridx", idx)
    back = load_index(tmp_path / "a.ridx")
    assert back.cfg == idx.cfg and back.projections == idx.projections
    assert [back.query(q).index for q in inst.queries] == [idx.query(q).index for q in inst.queries]
    assert index_bytes(back) == index_bytes(idx)


def test_index_bytes_deterministic():
    _, a = _robust()
    _, b = _robust()
    assert index_bytes(a) == index_bytes(b)


def test_budgeted_and_dslsh_round_trip():
    inst = gen_planted_budgeted(80, 16, 1.0, 10.0, seed=2, n_queries=5)
    idx = build_budgeted_index(inst.data, inst.costs, BudgetedConfig(seed=3))
    back = parse_index(index_bytes(idx))
    assert back.costs == idx.costs
    assert [back.query(q).index for q in inst.queries] == [idx.query(q).index for q in inst.queries]

    h = gen_hamming_planted(200, 64, 4, seed=1, n_queries=5)
    ds = build_ds_lsh(h.data, DsLshConfig(r=4, seed=2))
    back = parse_index(index_bytes(ds))
    assert back.cfg == ds.cfg
    for q in h.queries:
        a, b = ds.query(q), back.query(q)
        assert (a.outcome, a.witness, a.stats.level) == (b.outcome, b.witness, b.stats.level)


def test_index_version_and_corruption_rejected():
    _, idx = _robust()
    buf = index_bytes(idx)
    with pytest.raises(FormatError, match="version 7"):
        parse_index(buf[:4] + struct.pack("<I", 7) + buf[8:])
    with pytest.raises(FormatError, match="magic"):
        parse_index(b"NOPE" + buf[4:])
    with pytest.raises(FormatError):
        parse_index(buf[:-3])
    with pytest.raises(FormatError, match="trailing"):
        parse_index(buf + b"\0")
