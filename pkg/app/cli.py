"""
Command-line front end.

    python -m app solve instance.json [--eps 1e-4] [--time-limit 600] [--p 0.04] [--no-triangles]
    python -m app bound instance.json [--p 0]
    python -m app cuts --audit [--boxes 100] [--seed 0]
    python -m app gen --n 8 --m 12 --density 0.25 --seed 1 [--out path.json]
    python -m app bench [--seed 0] [--count 50] [--timings]

Results go to stdout as a flat key=value block (plus JSON with --json); logs go
to stderr. Exit codes: 0 success, 1 limit-terminated run or failed audit,
2 bad usage, 3 unreadable or invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.core.config import get_settings
from app.core.constants import ERROR_CODES, EXIT_INPUT, EXIT_LIMIT, EXIT_OK, EXIT_USAGE
from app.models.solver import Command, GenerateRequest, RunConfig, SolveResponse
from app.services.benchmark import run_suite
from app.services.cuts import padberg_form, triangle_cut
from app.services.qcqp import InstanceError, InstanceValueError, from_document, load_instance, save_instance
from app.services.solver_service import SolverService

logger = logging.getLogger(__name__)

LIMIT_STATUSES = {"gap_limit", "time_limit"}

AUDIT_COLUMNS = (
    "kind", "indices", "t", "witness_violation", "redundancy_lp", "family", "variant", "redundant_boxes",
)


def parse_p(text: str) -> int | float:
    """'0.04' is a fraction of |C u G|, '12' an absolute cap."""
    try:
        if any(ch in text for ch in ".eE"):
            return float(text)
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid p value: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eps", type=float, default=None, help="Relative optimality gap (default from settings)")
    common.add_argument("--time-limit", type=float, default=None, help="Wall-clock limit, seconds")
    common.add_argument("--p", type=parse_p, default=None, help="Dual cut cap: integer count or fraction of |C u G|")
    common.add_argument("--no-triangles", action="store_true", help="McCormick cuts only")
    common.add_argument("--seed", type=int, default=0, help="Generator / suite seed")
    common.add_argument("--threads", type=int, default=1, help="B&B worker threads (1 is deterministic)")
    common.add_argument("--json", action="store_true", help="Also print the result as JSON")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")

    parser = argparse.ArgumentParser(prog="qcqp", description="Global QCQP solver with General Triangle cuts.")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", parents=[common], help="Solve instances to global optimality")
    solve.add_argument("instances", nargs="+", help="Instance JSON files")
    solve.add_argument("--node-limit", type=int, default=None, help="Maximum processed nodes")

    bound = sub.add_parser("bound", parents=[common], help="Root bound from the dual heuristic")
    bound.add_argument("instances", nargs="+", help="Instance JSON files")
    bound.add_argument("--max-iter", type=int, default=None, help="Subgradient iterations")

    cuts = sub.add_parser("cuts", parents=[common], help="Triangle cuts and the cut selection audit")
    cuts.add_argument("--audit", action="store_true", help="Classify all 48 candidates on random boxes")
    cuts.add_argument("--boxes", type=int, default=100, help="Random boxes in the audit")

    gen = sub.add_parser("gen", parents=[common], help="Write a seeded unitbox instance")
    gen.add_argument("--n", type=int, required=True, help="Variable count")
    gen.add_argument("--m", type=int, required=True, help="Constraint count")
    gen.add_argument("--density", type=float, default=0.25, help="Share of nonzero matrix entries")
    gen.add_argument("--out", type=str, default=None, help="Output path (default <name>.json)")
    gen.add_argument("--no-diagonal", action="store_true", help="Leave the squared terms out")

    bench = sub.add_parser("bench", parents=[common], help="Paired suite, triangles on and off")
    bench.add_argument("--count", type=int, default=50, help="Instances in the suite")
    bench.add_argument("--n-min", type=int, default=8)
    bench.add_argument("--n-max", type=int, default=20)
    bench.add_argument("--m-ratio", type=float, default=1.0, help="m = round(m_ratio * n)")
    bench.add_argument("--density", type=float, default=0.25)
    bench.add_argument("--timings", action="store_true",
                       help="Add wall-clock columns (the table is no longer reproducible)")
    return parser


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def print_block(pairs: dict, out=None) -> None:
    out = out or sys.stdout
    for key, value in pairs.items():
        print(f"{key}={_fmt(value)}", file=out)
    print(file=out)


# ========== Commands ==========

def cmd_solve(config: RunConfig, service: SolverService) -> int:
    code = EXIT_OK
    results = []
    for path in config.instances:
        inst = load_instance(path)
        result: SolveResponse = service.solve(inst, config)
        results.append(result)
        block = {
            "instance": result.name,
            "status": result.status,
            "value": result.value,
            "best_bound": result.best_bound,
            "gap": result.gap,
            "nodes": result.nodes,
            "root_bound": result.root_bound,
            "root_gap": result.root_gap,
            "elapsed": round(result.elapsed, 3),
        }
        if result.incumbent is not None:
            block["x"] = ",".join(format(v, ".10g") for v in result.incumbent)
        print_block(block)
        if result.status in LIMIT_STATUSES:
            code = EXIT_LIMIT
    if config.json_output:
        print(json.dumps([r.model_dump() for r in results], indent=2))
    return code


def cmd_bound(config: RunConfig, service: SolverService, max_iter: Optional[int]) -> int:
    results = []
    for path in config.instances:
        inst = load_instance(path)
        result = service.bound(inst, config.p, max_iter, config.use_triangles)
        results.append(result)
        print_block({
            "instance": result.name,
            "bound": result.bound,
            "incumbent": result.incumbent_value,
            "gap": result.gap,
            "iterations": result.iterations,
            "working_set": result.working_set,
            "p": result.p,
        })
    if config.json_output:
        print(json.dumps([r.model_dump() for r in results], indent=2))
    return EXIT_OK


def cmd_cuts(config: RunConfig, service: SolverService, audit: bool, boxes: int) -> int:
    if not audit:
        lower, upper = np.zeros(3), np.ones(3)
        for t in range(1, 13):
            cut = triangle_cut(lower, upper, 0, 1, 2, t)
            print(f"t={t} family={cut.family} variant={cut.variant} form={padberg_form(cut)} "
                  f"x={cut.xv} y={cut.y} const={cut.const}")
        return EXIT_OK

    report = service.audit(boxes, config.seed)
    print("\t".join(AUDIT_COLUMNS))
    for row in report.rows:
        print("\t".join([
            row.kind,
            "0,1,2",
            str(row.triangle if row.triangle is not None else row.t),
            _fmt(row.witness_violation),
            _fmt(row.max_violation),
            str(row.family),
            str(row.variant),
            f"{row.redundant_boxes}/{boxes}",
        ]))
    print()
    print(report.summary)
    print_block({
        "boxes": report.boxes,
        "seed": report.seed,
        "witness_error": report.witness_error,
        "padberg": "ok" if report.padberg_ok else "mismatch",
    })
    if config.json_output:
        print(report.model_dump_json(indent=2))
    ok = report.cutting == 12 and report.redundant == 36 and report.padberg_ok
    return EXIT_OK if ok else EXIT_LIMIT


def cmd_gen(config: RunConfig, service: SolverService, n: int, m: int, density: float,
            diagonal: bool = True) -> int:
    request = GenerateRequest(n=n, m=m, density=density, seed=config.seed, diagonal=diagonal)
    inst = from_document(service.generate(request))
    path = save_instance(inst, config.output or f"{inst.name}.json")
    print_block({"instance": inst.name, "path": str(path), "n": inst.n, "m": inst.m})
    return EXIT_OK


def cmd_bench(config: RunConfig, count: int, n_range: tuple[int, int], m_ratio: float, density: float,
              timings: bool = False) -> int:
    report = run_suite(config.seed, count, n_range, m_ratio, density, config.bnb_config)
    header = ["instance", "gap_on", "gap_off", "nodes_on", "nodes_off"]
    if timings:
        header += ["time_on", "time_off"]
    print("\t".join(header))
    for r in report.rows:
        fields = [
            r.name,
            format(r.root_gap_on, ".4e"),
            format(r.root_gap_off, ".4e"),
            str(r.nodes_on),
            str(r.nodes_off),
        ]
        if timings:
            fields += [format(r.time_on, ".2f"), format(r.time_off, ".2f")]
        print("\t".join(fields))
    print()
    print_block({
        "instances": len(report.rows),
        "mean_root_gap_on": report.mean_gap_on,
        "mean_root_gap_off": report.mean_gap_off,
        "root_bound_share": report.bound_share,
        "root_bound_strict_share": report.strict_share,
        "node_share": report.node_share,
        "node_ratio_geomean": report.node_ratio,
    })
    if config.json_output:
        hidden = () if timings else ("time_on", "time_off")
        rows = [{k: v for k, v in r.__dict__.items() if k not in hidden} for r in report.rows]
        print(json.dumps(rows, indent=2))
    limited = any(r.status_on in LIMIT_STATUSES or r.status_off in LIMIT_STATUSES for r in report.rows)
    return EXIT_LIMIT if limited else EXIT_OK


# ========== Entry Point ==========

def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s: %(name)s - %(message)s", force=True)


def _usage_error(message: str) -> int:
    print(f"error: {ERROR_CODES['BAD_USAGE']}: {message}", file=sys.stderr)
    return EXIT_USAGE


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    configure_logging(args.verbose)
    if args.command == "bench" and args.n_min > args.n_max:
        return _usage_error("--n-min exceeds --n-max")

    try:
        config = RunConfig(
            command=Command(args.command),
            instances=getattr(args, "instances", []),
            eps_rel=args.eps,
            time_limit=args.time_limit,
            node_limit=getattr(args, "node_limit", None),
            p=args.p,
            use_triangles=not args.no_triangles,
            threads=args.threads,
            seed=args.seed,
            output=getattr(args, "out", None),
            json_output=args.json,
            verbose=args.verbose,
        )
        if args.command == "gen":
            GenerateRequest(n=args.n, m=args.m, density=args.density, seed=args.seed)
    except ValidationError as exc:
        return _usage_error("; ".join(err["msg"] for err in exc.errors()))

    for path in config.instances:
        if not Path(path).is_file():
            print(f"error: {ERROR_CODES['INPUT_UNREADABLE']}: {path}", file=sys.stderr)
            return EXIT_INPUT

    service = SolverService()
    try:
        if config.command is Command.SOLVE:
            return cmd_solve(config, service)
        if config.command is Command.BOUND:
            return cmd_bound(config, service, args.max_iter)
        if config.command is Command.CUTS:
            return cmd_cuts(config, service, args.audit, args.boxes)
        if config.command is Command.GEN:
            return cmd_gen(config, service, args.n, args.m, args.density, not args.no_diagonal)
        return cmd_bench(config, args.count, (args.n_min, args.n_max), args.m_ratio, args.density, args.timings)
    except InstanceError as exc:
        code = "INSTANCE_VALUE" if isinstance(exc, InstanceValueError) else "INSTANCE_FORMAT"
        print(f"error: {ERROR_CODES[code]}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {ERROR_CODES['INPUT_UNREADABLE']}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
