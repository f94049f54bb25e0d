"""Command-line entry point.

Exit codes: 0 success, 2 usage or input error, 3 infeasible problem, 4 solve failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import qp as qpmod
from .exact import solve_exact
from .instances import (GsetParseError, app_to_qubo, generate_app, generate_blob_graph, maxcut_to_qubo,
                        read_gset)
from .metrics import BenchmarkRecord, absolute_gap, approximation_ratio, records_to_csv, records_to_json, speedup
from .orchestrator import Infeasible, SolveFailure, SplitConfig, split_solve
from .partition import Partition

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FAILURE = 0, 2, 3, 4
WORKERS_ENV = "SPLITQP_WORKERS"


class UsageError(Exception):
    pass


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if w < 1:
        raise UsageError(f"{WORKERS_ENV} must be >= 1")
    return w


def _emit(text: str, output) -> None:
    if output is None or output == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(output).write_text(text)


def _load_problem(path):
    try:
        return qpmod.load_with_meta(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise UsageError(f"{path}: invalid problem file ({e})") from None


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=_k_arg, help="subproblem count, or 'auto' for max(1, n // 50)")
    p.add_argument("--iters", type=int, help="maximum number of iterations")
    p.add_argument("--seed", type=int)
    p.add_argument("--subsolver")
    p.add_argument("--budget-nodes", type=int)
    p.add_argument("--time-limit-s", type=float, help="wall-clock limit per subproblem solve")
    p.add_argument("--workers", type=int)
    p.add_argument("--sweep", choices=["none", "single_flip", "double_flip", "both"])
    p.add_argument("--partitioner", choices=["spectral", "greedy"])
    p.add_argument("--config", help="JSON file with SplitConfig fields; flags override it")
    p.add_argument("--partition-file", help="JSON partition to use instead of computing one")


def _k_arg(text: str):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}") from None


def auto_k(n: int) -> int:
    return max(1, n // 50)


_FLAG_FIELDS = {"k": "k", "iters": "n_iter", "seed": "seed", "subsolver": "subsolver",
                "budget_nodes": "node_budget", "time_limit_s": "wall_limit_s", "workers": "worker_count",
                "sweep": "sweep", "partitioner": "partitioner"}


def _config(args, n: int) -> SplitConfig:
    d: dict = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
    if "worker_count" not in d:
        d["worker_count"] = _default_workers()
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag)
        if v is not None:
            d[name] = auto_k(n) if v == "auto" else v
    if args.partition_file:
        try:
            part = Partition.from_json(Path(args.partition_file).read_text())
        except (OSError, ValueError, KeyError) as e:
            raise UsageError(f"cannot read partition {args.partition_file}: {e}") from None
        d.update(partition=[int(v) for v in part.assignment], partitioner="external", k=part.k)
    try:
        return SplitConfig.from_dict(d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}") from None


def cmd_solve(args) -> int:
    qp, _ = _load_problem(args.problem)
    cfg = _config(args, qp.n)
    report = split_solve(qp, cfg)
    _emit(report.to_json(indent=2), args.output)
    return EXIT_OK


def cmd_gen_maxcut(args) -> int:
    g = generate_blob_graph(args.n, args.blobs, args.std, args.threshold, args.seed, args.spread)
    meta = {"kind": "maxcut", "instance_id": args.id or f"blob-n{args.n}-s{args.seed}", "edges": g.edge_count}
    _emit(qpmod.dumps(maxcut_to_qubo(g), **meta), args.output)
    return EXIT_OK


def cmd_gen_app(args) -> int:
    v = args.v if args.v is not None else args.n // 2
    inst = generate_app(args.n, args.devices, v, args.radius, args.box_km, args.seed)
    meta = {"kind": "app", "instance_id": args.id or f"app-n{args.n}-s{args.seed}", "v": v,
            "radius": args.radius}
    _emit(qpmod.dumps(app_to_qubo(inst), **meta), args.output)
    return EXIT_OK


def cmd_import_gset(args) -> int:
    try:
        g = read_gset(args.path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {args.path}") from None
    except GsetParseError as e:
        raise UsageError(f"{args.path}: {e}") from None
    meta = {"kind": "maxcut", "instance_id": args.id or Path(args.path).stem, "edges": g.edge_count}
    if args.best_known is not None:
        meta["best_known_cut"] = args.best_known
    _emit(qpmod.dumps(maxcut_to_qubo(g), **meta), args.output)
    return EXIT_OK


def _exact_dict(res) -> dict:
    return {"best_x": None if res.x is None else [int(v) for v in res.x], "best_cost": res.cost,
            "optimal": res.optimal, "infeasible": res.infeasible, "method": res.method, "tts_seconds": res.seconds}


def cmd_exact(args) -> int:
    qp, _ = _load_problem(args.problem)
    res = solve_exact(qp, args.backend, args.time_limit_s, args.budget_nodes)
    _emit(json.dumps(_exact_dict(res), indent=2), args.output)
    if res.x is None:
        return EXIT_INFEASIBLE if res.infeasible else EXIT_FAILURE
    return EXIT_OK


def _bench_instance(path: Path, args) -> list[BenchmarkRecord]:
    qp, meta = _load_problem(path)
    cfg = _config(args, qp.n)
    iid = str(meta.get("instance_id", path.stem))
    is_maxcut = meta.get("kind") == "maxcut"
    rows = []
    try:
        rep = split_solve(qp, cfg)
        split = BenchmarkRecord(iid, qp.n, rep.k, "split", rep.best_cost, -rep.best_cost if is_maxcut else None,
                                rep.feasible, rep.tts_seconds, rep.iterations_run)
    except SolveFailure:
        split = BenchmarkRecord(iid, qp.n, cfg.k, "split", float("inf"), None, False, float("nan"), None)
    rows.append(split)
    if args.reference:
        res = solve_exact(qp, args.backend, args.ref_time_limit_s)
        tag = "exact" if res.optimal else "exact-capped"
        ref = BenchmarkRecord(iid, qp.n, None, tag, res.cost, -res.cost if is_maxcut and res.x is not None else None,
                              res.x is not None, res.seconds, None, optimal=res.optimal)
        rows.append(ref)
        if res.optimal and res.x is not None and split.feasible:
            split.alpha = approximation_ratio(split.best_cost, res.cost)
            if split.alpha is None:
                split.gap = absolute_gap(split.best_cost, res.cost)
            if is_maxcut:
                split.cut_alpha = approximation_ratio(split.cut_value, ref.cut_value)
            if res.seconds > 0 and split.tts_seconds > 0:
                split.speedup = speedup(res.seconds, split.tts_seconds)
    return rows


def cmd_bench(args) -> int:
    root = Path(args.directory)
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    records: list[BenchmarkRecord] = []
    for path in sorted(root.glob("*.json")):
        records.extend(_bench_instance(path, args))
    records.sort(key=lambda r: (r.instance_id, r.method))
    out = args.output
    text = records_to_json(records) if (args.format == "json" or (out and out.endswith(".json"))) \
        else records_to_csv(records)
    _emit(text, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="splitqp", description="Parallel decomposition solver for binary quadratic programs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem JSON, write a report JSON")
    p.add_argument("problem")
    _solver_flags(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen-maxcut", help="generate a blob MaxCut instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--spread", type=float, default=10.0, help="blob centre radius in units of std")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--id")
    p.add_argument("--output")
    p.set_defaults(func=cmd_gen_maxcut)

    p = sub.add_parser("gen-app", help="generate an antenna placement instance")
    p.add_argument("--n", type=int, required=True, help="number of candidate sites")
    p.add_argument("--v", type=int, help="antennas to place (default n/2)")
    p.add_argument("--radius", type=float, required=True, help="coverage radius in km")
    p.add_argument("--devices", type=int, help="device count (default 20n)")
    p.add_argument("--box-km", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--id")
    p.add_argument("--output")
    p.set_defaults(func=cmd_gen_app)

    p = sub.add_parser("import-gset", help="convert a Gset graph file to a problem JSON")
    p.add_argument("path")
    p.add_argument("--best-known", type=float)
    p.add_argument("--id")
    p.add_argument("--output")
    p.set_defaults(func=cmd_import_gset)

    p = sub.add_parser("exact", help="solve the whole problem exactly")
    p.add_argument("problem")
    p.add_argument("--backend", choices=["auto", "branch_bound", "milp"], default="auto")
    p.add_argument("--time-limit-s", type=float)
    p.add_argument("--budget-nodes", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("bench", help="run SPLIT (and a reference) over a directory of problem JSON files")
    p.add_argument("directory")
    _solver_flags(p)
    p.add_argument("--no-reference", dest="reference", action="store_false")
    p.add_argument("--backend", choices=["auto", "branch_bound", "milp"], default="auto")
    p.add_argument("--ref-time-limit-s", type=float, help="wall-clock cap per reference run")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--output")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"splitqp: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as e:
        print(f"splitqp: infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolveFailure as e:
        print(f"splitqp: solve failed: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as e:
        print(f"splitqp: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
