"""On-disk formats: datasets, cost sidecars and serialized indexes.

Dataset file (little-endian)::

    magic "RANN" | u16 version | u16 element type | u64 n | u64 d | payload

Element types are f64 (1), f32 (2) and bit (3). Bit rows are packed into
ceil(d/64) 64-bit words, coordinate j in bit j % 64 of word j // 64.

Index file::

    magic "RIDX" | u32 version | u64 header length | JSON header
    | embedded dataset | f64 costs (budgeted only)
    | projection records | u32-length-prefixed backend spec JSON blobs

The header carries the mode and full config, so a query needs nothing else.
DS-LSH indexes store no tables: they are rebuilt from the config and seed,
which is deterministic.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .base_ann import AnnBackendSpec
from .budgeted_index import BudgetedConfig, BudgetedIndex, CostVector, budgeted_plan
from .ds_lsh import DsLshConfig, DsLshIndex, build_ds_lsh
from .projections import Projection
from .robust_index import RobustIndex, RobustIndexConfig, plan

DATA_MAGIC = b"RANN"
DATA_VERSION = 1
INDEX_MAGIC = b"RIDX"
INDEX_VERSION = 1
COST_MAGIC = b"RCST"

F64, F32, BIT = 1, 2, 3
ELEM_NAMES = {"f64": F64, "f32": F32, "bit": BIT}
_DATA_HEADER = struct.Struct("<4sHHQQ")

MODE_ROBUST = "robust"
MODE_BUDGETED = "budgeted"
MODE_DSLSH = "dslsh"
MODES = (MODE_ROBUST, MODE_BUDGETED, MODE_DSLSH)


class FormatError(Exception):
    """Malformed, truncated or version-mismatched file."""


def _words(d: int) -> int:
    return (d + 63) // 64


def pack_bits(X: NDArray) -> NDArray[np.uint64]:
    n, d = X.shape
    padded = np.zeros((n, _words(d) * 64), dtype=np.uint8)
    padded[:, :d] = X
    return np.packbits(padded, axis=1, bitorder="little").view("<u8")


def unpack_bits(words: NDArray[np.uint64], d: int) -> NDArray[np.uint8]:
    raw = np.ascontiguousarray(words).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :d]


def dataset_bytes(X: NDArray, elem: str = "f64") -> bytes:
    if elem not in ELEM_NAMES:
        raise FormatError(f"unknown element type {elem!r}")
    X = np.asarray(X)
    if X.ndim != 2:
        raise FormatError("dataset must be a 2-d array")
    n, d = X.shape
    code = ELEM_NAMES[elem]
    if code == BIT:
        if not np.all((X == 0) | (X == 1)):
            raise FormatError("bit element type requires 0/1 values")
        payload = pack_bits(X.astype(np.uint8)).tobytes()
    else:
        payload = np.ascontiguousarray(X, dtype="<f8" if code == F64 else "<f4").tobytes()
    return _DATA_HEADER.pack(DATA_MAGIC, DATA_VERSION, code, n, d) + payload


def parse_dataset(buf: bytes, offset: int = 0) -> tuple[NDArray, str, int]:
    """(array, element type, end offset). Bit data comes back as uint8 0/1."""
    if len(buf) - offset < _DATA_HEADER.size:
        raise FormatError("dataset header truncated")
    magic, version, code, n, d = _DATA_HEADER.unpack_from(buf, offset)
    if magic != DATA_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if version != DATA_VERSION:
        raise FormatError(f"dataset format version {version} is not supported (expected {DATA_VERSION})")
    start = offset + _DATA_HEADER.size
    if code == BIT:
        size = n * _words(d) * 8
    elif code in (F64, F32):
        size = n * d * (8 if code == F64 else 4)
    else:
        raise FormatError(f"unknown element type code {code}")
    if len(buf) < start + size:
        raise FormatError(f"dataset payload truncated: need {size} bytes, have {len(buf) - start}")
    raw = buf[start : start + size]
    if code == BIT:
        X = unpack_bits(np.frombuffer(raw, dtype="<u8").reshape(n, _words(d)), d)
        elem = "bit"
    else:
        X = np.frombuffer(raw, dtype="<f8" if code == F64 else "<f4").reshape(n, d).astype(np.float64)
        elem = "f64" if code == F64 else "f32"
        if not np.all(np.isfinite(X)):
            raise FormatError("dataset contains NaN or Inf")
    return X, elem, start + size


def write_dataset(path, X: NDArray, elem: str = "f64") -> None:
    Path(path).write_bytes(dataset_bytes(X, elem))


def read_dataset(path) -> tuple[NDArray, str]:
    buf = _read(path)
    X, elem, end = parse_dataset(buf)
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes after dataset payload")
    return X, elem


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc


def write_costs(path, costs: NDArray[np.float64], binary: bool = False) -> None:
    w = np.asarray(costs, dtype=np.float64)
    if binary:
        Path(path).write_bytes(COST_MAGIC + struct.pack("<Q", w.size) + w.astype("<f8").tobytes())
    else:
        Path(path).write_text(",".join(repr(float(x)) for x in w) + "\n")


def read_costs(path) -> CostVector:
    """One-line CSV, or the binary sidecar (magic "RCST", u64 d, f64 values)."""
    buf = _read(path)
    if buf[:4] == COST_MAGIC:
        if len(buf) < 12:
            raise FormatError("cost sidecar truncated")
        (d,) = struct.unpack_from("<Q", buf, 4)
        if len(buf) != 12 + 8 * d:
            raise FormatError("cost sidecar length does not match its header")
        w = np.frombuffer(buf[12:], dtype="<f8").astype(np.float64)
    else:
        lines = [ln for ln in buf.decode("utf-8").splitlines() if ln.strip()]
        if len(lines) != 1:
            raise FormatError("CSV cost file must hold exactly one line")
        try:
            w = np.array([float(x) for x in lines[0].split(",")])
        except ValueError as exc:
            raise FormatError(f"bad cost value: {exc}") from exc
    return CostVector(w)


def _config_to_dict(cfg) -> dict[str, Any]:
    return asdict(cfg)


def config_from_dict(mode: str, d: dict[str, Any]):
    d = dict(d)
    if mode == MODE_DSLSH:
        return DsLshConfig(**d)
    d["backend"] = AnnBackendSpec(**d["backend"])
    if mode == MODE_ROBUST:
        return RobustIndexConfig(**d)
    if mode == MODE_BUDGETED:
        return BudgetedConfig(**d)
    raise FormatError(f"unknown index mode {mode!r}")


AnyIndex = RobustIndex | BudgetedIndex | DsLshIndex


def index_mode(index: AnyIndex) -> str:
    if isinstance(index, RobustIndex):
        return MODE_ROBUST
    if isinstance(index, BudgetedIndex):
        return MODE_BUDGETED
    if isinstance(index, DsLshIndex):
        return MODE_DSLSH
    raise TypeError(f"not an index: {type(index).__name__}")


def index_bytes(index: AnyIndex) -> bytes:
    mode = index_mode(index)
    if mode == MODE_DSLSH:
        data = dataset_bytes(index.raw_points, "bit")
        projections: list[Projection] = []
        specs: list[AnnBackendSpec] = []
    else:
        data = dataset_bytes(index.points, "f64")
        projections, specs = index.projections, index.backend_specs
    header = {
        "mode": mode,
        "config": _config_to_dict(index.cfg),
        "n": int(index.n),
        "d": int(index.d),
        "projections": len(projections),
    }
    if mode == MODE_BUDGETED:
        header["t"] = int(index.t)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    out = io.BytesIO()
    out.write(INDEX_MAGIC + struct.pack("<IQ", INDEX_VERSION, len(head)) + head)
    out.write(data)
    if mode == MODE_BUDGETED:
        out.write(index.costs.costs.astype("<f8").tobytes())
    for pj in projections:
        out.write(pj.to_bytes())
    for spec in specs:
        blob = spec.to_json().encode("utf-8")
        out.write(struct.pack("<I", len(blob)) + blob)
    return out.getvalue()


def save_index(path, index: AnyIndex) -> None:
    Path(path).write_bytes(index_bytes(index))


def parse_index(buf: bytes, workers: int | None = None) -> AnyIndex:
    if len(buf) < 16 or buf[:4] != INDEX_MAGIC:
        raise FormatError("not an index file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", buf, 4)
    if version != INDEX_VERSION:
        raise FormatError(f"index format version {version} is not supported (expected {INDEX_VERSION})")
    try:
        header = json.loads(buf[16 : 16 + hlen].decode("utf-8"))
        mode = header["mode"]
        cfg = config_from_dict(mode, header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"corrupt index header: {exc}") from exc
    X, _, off = parse_dataset(buf, 16 + hlen)
    if X.shape != (header["n"], header["d"]):
        raise FormatError("embedded dataset shape disagrees with the index header")
    if mode == MODE_DSLSH:
        if off != len(buf):
            raise FormatError("trailing bytes after DS-LSH index")
        return build_ds_lsh(X, cfg)
    costs = None
    if mode == MODE_BUDGETED:
        end = off + 8 * header["d"]
        if len(buf) < end:
            raise FormatError("cost vector truncated")
        costs = CostVector(np.frombuffer(buf[off:end], dtype="<f8").astype(np.float64))
        off = end
    projections = []
    try:
        for _ in range(header["projections"]):
            pj, off = Projection.from_bytes(buf, off)
            projections.append(pj)
        specs = []
        for _ in range(header["projections"]):
            (blen,) = struct.unpack_from("<I", buf, off)
            specs.append(AnnBackendSpec.from_json(buf[off + 4 : off + 4 + blen].decode("utf-8")))
            off += 4 + blen
    except (struct.error, ValueError) as exc:
        raise FormatError(f"corrupt index body: {exc}") from exc
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after index body")
    if mode == MODE_ROBUST:
        return RobustIndex(X, cfg, plan(X.shape[0], cfg), projections, specs, workers)
    t, _ = budgeted_plan(X.shape[0], cfg)
    idx = BudgetedIndex(X, costs, cfg, projections, header.get("t", t), workers)
    if idx.backend_specs != specs:
        raise FormatError("stored backend specs disagree with the config")
    return idx


def load_index(path, workers: int | None = None) -> AnyIndex:
    return parse_index(_read(path), workers)
