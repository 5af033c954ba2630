"""Command line interface: ``analyze``, ``corpus`` and ``simulate``."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from .analyzer import (AnalysisConfig, AssertViolation, analyze, expected_verdict,
                       random_state, run_corpus, simulate, write_json)
from .lang import ParseError, build_cfa, parse
from .recurrence import GUARD_STRATEGIES, IterationConfig
from .smt import DEFAULT_TIMEOUT_MS, SolverError

EXIT_OK = 0
EXIT_UNSOUND = 2
EXIT_USAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _analysis_flags(p: argparse.ArgumentParser):
    p.add_argument("--guard", choices=GUARD_STRATEGIES, default="hull")
    p.add_argument("--no-inequations", action="store_true")
    p.add_argument("--no-stratified", action="store_true")
    p.add_argument("--max-stratum", type=int, default=None)
    p.add_argument("--timeout-ms", type=int, default=DEFAULT_TIMEOUT_MS)
    p.add_argument("--solver", default=None, help="solver binary (default: $LRA_SOLVER or z3)")
    p.add_argument("--dump-recurrences", action="store_true")
    p.add_argument("--json", metavar="OUT", default=None)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lra", description="Loop summarisation by linear recurrence analysis.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    a = sub.add_parser("analyze", help="check the assertions of one program")
    a.add_argument("file")
    _analysis_flags(a)
    c = sub.add_parser("corpus", help="analyze every *.prog file of a directory")
    c.add_argument("dir")
    c.add_argument("--jobs", type=int, default=None)
    _analysis_flags(c)
    s = sub.add_parser("simulate", help="run a program on a random input")
    s.add_argument("file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int, default=1000)
    return p


def config_from_args(args) -> AnalysisConfig:
    if args.max_stratum is not None and args.max_stratum < 1:
        raise ValueError("--max-stratum must be at least 1")
    it = IterationConfig(
        guard_strategy=args.guard,
        max_stratum=args.max_stratum,
        timeout_ms=args.timeout_ms,
        inequations=not args.no_inequations,
        stratified=not args.no_stratified,
    )
    return AnalysisConfig(it, args.timeout_ms, args.solver, args.dump_recurrences)


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc


def cmd_analyze(args) -> int:
    cfg = config_from_args(args)
    source = _read(args.file)
    report = analyze(source, cfg, file=args.file)
    print(report.text())
    if args.json:
        write_json(report.to_json(), args.json)
    if expected_verdict(source) == "unsafe" and report.all_proved and report.assertions:
        print("soundness violation: program annotated unsafe was proved", file=sys.stderr)
        return EXIT_UNSOUND
    return EXIT_OK


def cmd_corpus(args) -> int:
    cfg = config_from_args(args)
    if not Path(args.dir).is_dir():
        raise ValueError(f"not a directory: {args.dir}")
    summary = run_corpus(args.dir, cfg, args.jobs)
    print(summary.table())
    if args.json:
        write_json(summary.to_json(), args.json)
    return summary.exit_code


def cmd_simulate(args) -> int:
    program = parse(_read(args.file))
    cfa = build_cfa(program)
    rng = random.Random(args.seed)
    init = random_state(cfa.vars, rng)
    out = simulate(cfa, init, args.steps, rng)
    result = {"outcome": out.kind, "initial": init, "final": out.state,
              "steps": len(out.trace) - 1}
    if isinstance(out, AssertViolation):
        result["line"] = out.line
    print(json.dumps(result))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"analyze": cmd_analyze, "corpus": cmd_corpus, "simulate": cmd_simulate}[args.command](args)
    except (ValueError, ParseError) as exc:
        print(f"lra: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"lra: solver error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
