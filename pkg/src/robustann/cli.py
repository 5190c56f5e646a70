"""``rann`` command line: gen, build, query, oracle, lemmas, bench.

Exit codes: 0 success, 1 usage, 2 data or format error, 3 failed assertion
(including a failing statistical check in ``lemmas``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from . import __version__
from .base_ann import BIT_SAMPLE_LSH, EXACT_SCAN, AnnBackendSpec
from .budgeted_index import (
    EXACT_MAX_DIM,
    BudgetedConfig,
    admissible_distance_approx,
    admissible_distance_exact,
    build_budgeted_index,
    weighted_light_norm,
)
from .core import NormParams, ParameterError, is_light, robust_distances, tail
from .ds_lsh import NEAR, DsLshConfig, as_binary, build_ds_lsh, hamming_distances
from .evaluation import (
    gen_hamming_planted,
    gen_planted,
    gen_planted_budgeted,
    lemma_suite,
    read_jsonl,
    write_jsonl,
    _json_default,
)
from .formats import (
    MODE_BUDGETED,
    MODE_DSLSH,
    MODE_ROBUST,
    MODES,
    FormatError,
    config_from_dict,
    index_mode,
    load_index,
    read_costs,
    read_dataset,
    save_index,
    write_costs,
    write_dataset,
)
from .robust_index import CONSTANT_FACTOR, EPS_APPROX, RobustIndexConfig, build_robust_index, light_params, plan

log = logging.getLogger("robustann")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ASSERT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(fh: TextIO, rec: dict[str, Any]) -> None:
    fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")


def _open_out(path: str | None) -> TextIO:
    return open(path, "w", encoding="utf-8") if path and path != "-" else sys.stdout


def cmd_gen(args) -> int:
    out = Path(args.out)
    try:
        if args.mode == MODE_ROBUST:
            if args.k is None:
                raise UsageError("--k is required in robust mode")
            if not 0 <= args.k < args.d:
                raise UsageError(f"--k must satisfy 0 <= k < d (got k={args.k}, d={args.d})")
            noise = args.noise if args.noise is not None else 10 * args.r / max(args.k, 1)
            inst = gen_planted(args.n, args.d, args.k, args.r, noise, args.seed, args.queries, args.p)
            elem = "f64"
        elif args.mode == MODE_BUDGETED:
            costs = None
            if args.costs_profile == "file":
                if not args.costs_file:
                    raise UsageError("--costs-profile file needs --costs-file")
                costs = read_costs(args.costs_file).costs
            noise = args.noise if args.noise is not None else 10 * args.r
            inst = gen_planted_budgeted(args.n, args.d, args.r, noise, args.seed, args.queries,
                                        profile=args.costs_profile, costs=costs)
            elem = "f64"
        else:
            if args.r != int(args.r) or args.r < 1:
                raise UsageError("--r must be a positive integer in dslsh mode")
            inst = gen_hamming_planted(args.n, args.d, int(args.r), args.seed, args.queries)
            elem = "bit"
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    write_dataset(f"{out}.data.rann", inst.data, elem)
    write_dataset(f"{out}.queries.rann", inst.queries, elem)
    write_jsonl(f"{out}.truth.jsonl", inst.truth_records())
    if inst.costs is not None:
        write_costs(f"{out}.costs.csv", inst.costs.costs)
    print(json.dumps({"data": f"{out}.data.rann", "queries": f"{out}.queries.rann",
                      "truth": f"{out}.truth.jsonl", "params": inst.params}, sort_keys=True))
    return EXIT_OK


def _backend(args) -> AnnBackendSpec:
    if args.backend == EXACT_SCAN:
        return AnnBackendSpec()
    return AnnBackendSpec(kind=BIT_SAMPLE_LSH, c=max(1.0, args.c), n_tables=args.tables, bits_per_hash=args.bits)


def cmd_build(args) -> int:
    X, elem = read_dataset(args.data)
    t0 = time.perf_counter()
    if args.mode == MODE_ROBUST:
        if args.k is None:
            raise UsageError("--k is required in robust mode")
        mode = EPS_APPROX if args.variant == "eps" else CONSTANT_FACTOR
        cfg = RobustIndexConfig(k=args.k, p=args.p, delta=args.delta, c=args.c, mode=mode, eps=args.eps,
                                L_scale=args.L_scale, seed=args.seed, backend=_backend(args))
        index = build_robust_index(X, cfg)
    elif args.mode == MODE_BUDGETED:
        if not args.costs:
            raise UsageError("--costs is required in budgeted mode")
        cfg = BudgetedConfig(delta=args.delta, eps=args.eps, L_scale=args.L_scale, seed=args.seed,
                             backend=_backend(args))
        index = build_budgeted_index(X, read_costs(args.costs), cfg)
    else:
        if args.r is None:
            raise UsageError("--r is required in dslsh mode")
        cfg = DsLshConfig(r=args.r, eps=args.eps, alpha=args.alpha, c3=args.c3, seed=args.seed,
                          dup_factor=args.dup, early_exit=args.early_exit)
        index = build_ds_lsh(as_binary(X), cfg)
    save_index(args.out, index)
    print(json.dumps({"index": args.out, "mode": args.mode, "n": int(X.shape[0]), "d": int(X.shape[1]),
                      "build_seconds": round(time.perf_counter() - t0, 4)}, sort_keys=True))
    return EXIT_OK


def _query_record(mode: str, j: int, res, wall_ms: float) -> dict[str, Any]:
    if mode == MODE_DSLSH:
        return {"type": "query", "query": j, "outcome": res.outcome,
                "answer": -1 if res.witness is None else res.witness,
                "distance": res.distance, "stats": res.stats.as_dict(), "wall_ms": wall_ms}
    subs = res.substructures
    stats = {"structures": len(subs), "distinct_candidates": len(res.candidates),
             "backend_candidates": int(sum(s["candidates"] for s in subs)),
             "fallbacks": int(sum(bool(s["fallback"]) for s in subs))}
    rec = {"type": "query", "query": j, "answer": res.index, "distance": res.distance, "stats": stats,
           "wall_ms": wall_ms}
    if mode == MODE_BUDGETED:
        rec["ignored"] = sorted(res.ignored)
    return rec


def cmd_query(args) -> int:
    index = load_index(args.index)
    mode = index_mode(index)
    if args.mode and args.mode != mode:
        raise UsageError(f"--mode {args.mode} does not match the index mode {mode}")
    Q, _ = read_dataset(args.queries)
    if Q.shape[1] != index.d:
        raise ParameterError(f"queries have d={Q.shape[1]}, index has d={index.d}")
    if mode == MODE_DSLSH:
        Q = as_binary(Q)
    fh = _open_out(args.out)
    try:
        header = {"type": "header", "mode": mode, "n": int(index.n), "d": int(index.d),
                  "config": asdict(index.cfg), "version": __version__}
        _emit(fh, header)
        for j, q in enumerate(Q):
            t0 = time.perf_counter()
            res = index.query(q)
            wall = (time.perf_counter() - t0) * 1e3
            _emit(fh, _query_record(mode, j, res, round(wall, 4)))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_oracle(args) -> int:
    X, _ = read_dataset(args.data)
    Q, _ = read_dataset(args.queries)
    if Q.shape[1] != X.shape[1]:
        raise ParameterError(f"queries have d={Q.shape[1]}, data has d={X.shape[1]}")
    fh = _open_out(args.out)
    try:
        if args.mode == MODE_ROBUST:
            if args.k is None:
                raise UsageError("--k is required in robust mode")
            params = NormParams(p=args.p, k=args.k)
            for j, q in enumerate(Q):
                dists = robust_distances(X, q, params)
                i = int(np.argmin(dists))
                _emit(fh, {"query": j, "index": i, "distance": float(dists[i])})
        elif args.mode == MODE_BUDGETED:
            if not args.costs:
                raise UsageError("--costs is required in budgeted mode")
            costs = read_costs(args.costs)
            exact = costs.support.size <= EXACT_MAX_DIM
            for j, q in enumerate(Q):
                best = None
                for i, x in enumerate(X):
                    val, ign = (admissible_distance_exact(q, x, costs) if exact
                                else admissible_distance_approx(q, x, costs, args.eps))
                    if best is None or val < best[1]:
                        best = (i, val, ign)
                _emit(fh, {"query": j, "index": best[0], "distance": best[1], "ignored": sorted(best[2]),
                           "method": "exact" if exact else f"approx(eps={args.eps:g})"})
        else:
            Xb, Qb = as_binary(X), as_binary(Q)
            for j, q in enumerate(Qb):
                dist = hamming_distances(Xb, q)
                i = int(np.argmin(dist))
                _emit(fh, {"query": j, "index": i, "distance": int(dist[i])})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_lemmas(args) -> int:
    checks = lemma_suite(seed=args.seed, scale=args.scale)
    for c in checks:
        print(c.line())
    if args.out:
        write_jsonl(args.out, [c.as_record() for c in checks])
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} of {len(checks)} checks failed", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def _quantile(values, q) -> float | None:
    return float(np.quantile(values, q)) if len(values) else None


def cmd_bench(args) -> int:
    records = read_jsonl(args.results)
    if not records or records[0].get("type") != "header":
        raise FormatError(f"{args.results}: first record must be the query header")
    header, rows = records[0], [r for r in records[1:] if r.get("type") == "query"]
    mode = header["mode"]
    truth = {t["query"]: t for t in read_jsonl(args.truth)}
    X, _ = read_dataset(args.data)
    Q, _ = read_dataset(args.queries)
    if X.shape != (header["n"], header["d"]) or Q.shape[1] != header["d"]:
        raise ParameterError("data or queries do not match the index the results came from")
    cfg = config_from_dict(mode, header["config"])
    trials = []
    for row in rows:
        j, a = row["query"], row["answer"]
        if j not in truth:
            raise FormatError(f"no ground truth for query {j}")
        t = truth[j]
        trial = {"type": "trial", "query": j, "answer": a, "planted": t["planted"], "hit": a == t["planted"],
                 "wall_ms": row["wall_ms"]}
        r = float(t["r"])
        if mode == MODE_DSLSH:
            trial.update(outcome=row["outcome"], level=row["stats"]["level"], scanned=row["stats"]["scanned"],
                         final_scan=row["stats"]["final_scan"])
            if a >= 0:
                trial["within"] = bool(row["distance"] <= (1 + cfg.eps) * cfg.r)
        elif a >= 0:
            diff = Q[j] - X[a]
            if mode == MODE_ROBUST:
                lh = light_params(cfg, plan(X.shape[0], cfg), r)
                trial["light"] = bool(is_light(diff, lh, cfg.p))
                best = float(robust_distances(X, Q[j], NormParams(cfg.p, cfg.k)).min())
                trial["ratio"] = 1.0 if row["distance"] == best else row["distance"] / best if best > 0 else math.inf
                if cfg.mode == EPS_APPROX:
                    wide = min(X.shape[1], math.ceil(cfg.k / (cfg.delta * cfg.eps**5)))
                    trial["eps_ok"] = bool(tail(diff, wide, 1.0) <= (1 + 2 * cfg.eps) * r)
            else:
                costs = read_costs(args.costs) if args.costs else None
                if costs is None:
                    raise UsageError("--costs is required to bench a budgeted run")
                level = 33 * (1 + cfg.eps) * r
                trial["light"] = bool(weighted_light_norm(diff, r, costs, cfg.c1) <= level)
                trial["ratio"] = row["distance"] / r if r > 0 else math.inf
        trials.append(trial)

    lat = [t["wall_ms"] for t in trials]
    summary: dict[str, Any] = {"type": "summary", "mode": mode, "queries": len(trials),
                               "recall": float(np.mean([t["hit"] for t in trials])) if trials else None,
                               "latency_ms_p50": _quantile(lat, 0.5), "latency_ms_p95": _quantile(lat, 0.95)}
    for key in ("light", "eps_ok", "within", "final_scan"):
        vals = [t[key] for t in trials if key in t]
        if vals:
            summary[f"{key}_fraction"] = float(np.mean(vals))
    for key in ("ratio", "level", "scanned"):
        vals = [t[key] for t in trials if key in t]
        if vals:
            summary[f"mean_{key}"] = float(np.mean(vals))
    if mode == MODE_DSLSH:
        summary["near_fraction"] = float(np.mean([t["outcome"] == NEAR for t in trials])) if trials else None
        summary["levels"] = header_levels = int(max([t["level"] for t in trials] + [1]))

    figures = []
    if args.fig_dir:
        from . import plotting

        fig_dir = Path(args.fig_dir)
        fig_dir.mkdir(parents=True, exist_ok=True)
        figures.append(str(plotting.latency_histogram(lat, fig_dir / "latency.png")))
        ratios = [t["ratio"] for t in trials if "ratio" in t and math.isfinite(t["ratio"])]
        if ratios:
            figures.append(str(plotting.ratio_plot(ratios, fig_dir / "ratio.png")))
        if mode == MODE_DSLSH:
            figures.append(str(plotting.stopping_levels([t["level"] for t in trials], header_levels,
                                                        fig_dir / "levels.png")))
    summary["figures"] = figures
    fh = _open_out(args.out)
    try:
        for t in trials:
            _emit(fh, t)
        _emit(fh, summary)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.out and args.out != "-":
        print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rann", description="Robust approximate nearest-neighbor indexes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def mode_arg(p, required=True):
        p.add_argument("--mode", choices=MODES, default=MODE_ROBUST if required else None)

    g = sub.add_parser("gen", help="generate a planted instance")
    mode_arg(g)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--k", type=int)
    g.add_argument("--r", type=float, default=1.0)
    g.add_argument("--p", type=float, default=1.0)
    g.add_argument("--noise", type=float)
    g.add_argument("--queries", type=int, default=50)
    g.add_argument("--costs-profile", choices=("uniform", "random", "file"), default="random")
    g.add_argument("--costs-file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output prefix")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build and serialize an index")
    mode_arg(b)
    b.add_argument("--data", required=True)
    b.add_argument("--costs")
    b.add_argument("--k", type=int)
    b.add_argument("--p", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=0.5)
    b.add_argument("--c", type=float, default=1.0)
    b.add_argument("--eps", type=float, default=0.5)
    b.add_argument("--variant", choices=("constant", "eps"), default="constant")
    b.add_argument("--L-scale", dest="L_scale", type=float, default=1.0)
    b.add_argument("--backend", choices=(EXACT_SCAN, BIT_SAMPLE_LSH), default=EXACT_SCAN)
    b.add_argument("--tables", type=int, default=16)
    b.add_argument("--bits", type=int, default=12)
    b.add_argument("--r", type=int, help="near radius (dslsh)")
    b.add_argument("--alpha", type=float, default=8.0)
    b.add_argument("--c3", type=float, default=3.0)
    b.add_argument("--dup", type=int)
    b.add_argument("--early-exit", action="store_true")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="query a serialized index")
    mode_arg(q, required=False)
    q.add_argument("--index", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_query)

    o = sub.add_parser("oracle", help="brute-force ground truth")
    mode_arg(o)
    o.add_argument("--data", required=True)
    o.add_argument("--queries", required=True)
    o.add_argument("--k", type=int)
    o.add_argument("--p", type=float, default=1.0)
    o.add_argument("--costs")
    o.add_argument("--eps", type=float, default=0.1)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    lm = sub.add_parser("lemmas", help="run the statistical checks")
    lm.add_argument("--seed", type=int, default=42)
    lm.add_argument("--scale", type=float, default=1.0)
    lm.add_argument("--out")
    lm.set_defaults(func=cmd_lemmas)

    bn = sub.add_parser("bench", help="join query results with ground truth")
    bn.add_argument("--results", required=True)
    bn.add_argument("--truth", required=True)
    bn.add_argument("--data", required=True)
    bn.add_argument("--queries", required=True)
    bn.add_argument("--costs")
    bn.add_argument("--out")
    bn.add_argument("--fig-dir")
    bn.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ParameterError, OSError) as exc:
        print(f"rann: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"rann: assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
