"""``pathfocus`` command line entry point.

Exit codes: 0 analysis completed and verified, 1 completed but not verified
inductive or some assertion unproved, 2 usage or input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .engine import AnalysisResult, BudgetExhausted, EngineConfig, Mode, SolverUnknown, Verdict, analyze
from .ir import InvalidCutSet, ParseError, Program, ValidationError, default_cuts, parse_program
from .report import render_compare_json, render_compare_text, render_json, render_text
from .smt.smtlib import SolverProtocolError, SolverSpawnError

EXIT_OK = 0
EXIT_UNVERIFIED = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def shipped_benchmarks() -> list[str]:
    root = resources.files("pathfocus") / "benchmarks"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".pfa"))


def load_source(arg: str) -> tuple[str, str]:
    """Program text and name for a file path, or for the stem of a shipped benchmark."""
    path = Path(arg)
    if path.is_file():
        return path.read_text(), path.stem
    stem = arg[:-4] if arg.endswith(".pfa") else arg
    if "/" not in arg and stem in shipped_benchmarks():
        res = resources.files("pathfocus") / "benchmarks" / f"{stem}.pfa"
        return res.read_text(), stem
    raise FileNotFoundError(arg)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathfocus", description="Interval invariants by SMT-guided path focusing.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    a = sub.add_parser("analyze", help="analyze a .pfa program")
    a.add_argument("program", help="path to a .pfa file, or the name of a shipped benchmark")
    a.add_argument("--engine", choices=["classical", "pathfocus", "selfloops", "compare"], default="pathfocus")
    a.add_argument("--accel", action="store_true", help="accelerate guarded translation self-loops")
    a.add_argument("--narrow", type=int, default=2, metavar="K", help="narrowing passes (0-10, default 2)")
    a.add_argument("--solver", default="internal", metavar="internal|external:CMD")
    a.add_argument("--dump-smt", metavar="DIR", help="write every solver query to DIR as SMT-LIB2")
    a.add_argument("--format", choices=["text", "json"], default="text")
    a.add_argument("--budget", type=int, default=None, metavar="N", help="solver and iteration step budget")
    a.add_argument("--pr-extra", default="", metavar="NODE,...", help="extra abstraction points")
    a.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    sub.add_parser("benchmarks", help="list the shipped benchmark programs")
    return parser


def _extra_nodes(p: Program, names: str) -> list[int]:
    out = []
    for name in filter(None, (s.strip() for s in names.split(","))):
        try:
            out.append(p.node_named(name).id)
        except KeyError:
            raise InvalidCutSet(f"unknown node {name!r} in --pr-extra") from None
    return out


def _exit_code(results: list[AnalysisResult]) -> int:
    if any(r.stats.fallback for r in results):
        return EXIT_SOLVER
    for r in results:
        if not r.inductive or any(v is Verdict.UNKNOWN for v in r.assertions.values()):
            return EXIT_UNVERIFIED
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "benchmarks":
        for name in shipped_benchmarks():
            print(name)
        return EXIT_OK

    try:
        text, name = load_source(args.program)
        program = parse_program(text, name)
        cuts = default_cuts(program, _extra_nodes(program, args.pr_extra))
        base = dict(
            use_acceleration=args.accel,
            narrow_steps=args.narrow,
            solver=args.solver,
            dump_smt=args.dump_smt,
        )
        if args.budget is not None:
            base["step_budget"] = args.budget
        modes = [Mode.CLASSICAL, Mode.PATHFOCUS, Mode.SELFLOOPS] if args.engine == "compare" else [Mode(args.engine)]
        configs = [EngineConfig(mode=m, **base) for m in modes]
    except FileNotFoundError as exc:
        print(f"pathfocus: no such program: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"pathfocus: {args.program}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, InvalidCutSet, ValueError) as exc:
        print(f"pathfocus: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        results = [analyze(program, cfg, cuts) for cfg in configs]
    except (SolverSpawnError, SolverProtocolError, SolverUnknown) as exc:
        print(f"pathfocus: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BudgetExhausted as exc:
        print(f"pathfocus: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if len(results) > 1:
        out = render_compare_json(results, args.timing) if args.format == "json" else render_compare_text(results)
    elif args.format == "json":
        out = render_json(results[0], args.timing)
    else:
        out = render_text(results[0], args.timing)
    sys.stdout.write(out)
    for r in results if args.format == "json" else ():
        for d in r.diagnostics:
            print(f"pathfocus: {r.mode.value}: {d}", file=sys.stderr)
    return _exit_code(results)


if __name__ == "__main__":
    raise SystemExit(main())
