"""End-to-end assertion checking, a concrete CFA simulator and a corpus runner."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .formula import conj, is_linear, negate, prime
from .lang import (CFA, Assign, Assume, Havoc, Program, bexpr_to_formula, build_cfa,
                   eval_bexpr, eval_expr, parse, show_bexpr)
from .formula import DivisionByZero
from .linearize import lin
from .pathexpr import UnreachableTarget, eliminate, evaluate, star as star_expr
from .recurrence import IterationConfig
from .semantics import lra_interpretation
from .smt import DEFAULT_TIMEOUT_MS, Solver, SolverError

log = logging.getLogger(__name__)

EXPECT = re.compile(r"//\s*expect:\s*(safe|unsafe)\b")


@dataclass
class AnalysisConfig:
    iteration: IterationConfig = field(default_factory=IterationConfig)
    timeout_ms: int = DEFAULT_TIMEOUT_MS
    solver: Optional[str] = None
    dump_recurrences: bool = False
    nonlinear_timeout_ms: int = 2000

    def echo(self) -> dict:
        it = self.iteration
        return {
            "guard": it.guard_strategy,
            "inequations": it.inequations,
            "stratified": it.stratified,
            "max_stratum": it.max_stratum,
            "timeout_ms": self.timeout_ms,
            "solver": self.solver,
        }


@dataclass
class AssertionResult:
    line: int
    vertex: int
    condition: str
    verdict: str  # proved | not-proved
    time_ms: float
    method: str = ""


@dataclass
class LoopReport:
    header_line: int
    recurrences: list
    closed_forms: list
    guard: str
    note: str = ""


@dataclass
class AnalysisReport:
    file: Optional[str]
    config: dict
    assertions: list = field(default_factory=list)
    loops: list = field(default_factory=list)
    timing_ms: dict = field(default_factory=dict)

    @property
    def all_proved(self) -> bool:
        return all(a.verdict == "proved" for a in self.assertions)

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "config": self.config,
            "assertions": [asdict(a) for a in self.assertions],
            "loops": [asdict(lp) for lp in self.loops],
            "timing_ms": self.timing_ms,
        }

    def text(self) -> str:
        lines = [f"{self.file or '<input>'}:"]
        for a in self.assertions:
            lines.append(f"  line {a.line}: assert({a.condition}) {a.verdict} ({a.time_ms:.0f} ms)")
        if not self.assertions:
            lines.append("  no assertions")
        for lp in self.loops:
            lines.append(f"  loop at line {lp.header_line}:")
            for r in lp.recurrences:
                lines.append(f"    recurrence  {r}")
            for c in lp.closed_forms:
                lines.append(f"    closed form {c}")
            lines.append(f"    guard       {lp.guard}")
        return "\n".join(lines)


def check_assertion(phi, cond, solver: Solver, cfg: AnalysisConfig) -> tuple[bool, str]:
    """Does every post-state of ``phi`` satisfy ``cond``?"""
    goal = bexpr_to_formula(cond, prime)
    query = conj(phi.phi, negate(goal))
    if is_linear(query):
        return solver.is_sat(query, timeout_ms=cfg.timeout_ms) == "unsat", "linear"
    try:
        if solver.is_sat(query, timeout_ms=cfg.nonlinear_timeout_ms) == "unsat":
            return True, "non-linear"
    except SolverError:
        pass
    linear = lin(query, solver, timeout_ms=cfg.timeout_ms)
    return solver.is_sat(linear, timeout_ms=cfg.timeout_ms) == "unsat", "linearized"


def analyze(source: str, cfg: Optional[AnalysisConfig] = None, file: Optional[str] = None,
            solver: Optional[Solver] = None) -> AnalysisReport:
    cfg = cfg or AnalysisConfig()
    report = AnalysisReport(file, cfg.echo())
    t0 = time.perf_counter()
    program = parse(source)
    t1 = time.perf_counter()
    cfa = build_cfa(program)
    t2 = time.perf_counter()
    report.timing_ms["parse"] = (t1 - t0) * 1000
    report.timing_ms["cfa"] = (t2 - t1) * 1000
    own = solver is None
    solver = solver or Solver(cfg.solver, cfg.timeout_ms)
    try:
        stars: list = []
        interp = lra_interpretation(cfa.vars, solver, cfg.iteration, stars)
        memo: dict = {}
        bodies: dict = {}
        for v in sorted(cfa.assert_points):
            cond, line = cfa.assert_points[v]
            start = time.perf_counter()
            try:
                res = eliminate(cfa, v)
                bodies.update(res.loop_bodies)
                phi = evaluate(res.expr, interp, memo)
                ok, method = check_assertion(phi, cond, solver, cfg)
            except UnreachableTarget:
                ok, method = True, "unreachable"
            except SolverError as exc:
                log.info("assertion at line %d: %s", line, exc)
                ok, method = False, "solver failure"
            ms = (time.perf_counter() - start) * 1000
            report.assertions.append(AssertionResult(
                line, v, show_bexpr(cond), "proved" if ok else "not-proved", ms, method))
        if cfg.dump_recurrences:
            _collect_loops(cfa, interp, memo, bodies, stars, report)
    finally:
        if own:
            solver.close()
    report.timing_ms["analysis"] = (time.perf_counter() - t2) * 1000
    return report


def _collect_loops(cfa: CFA, interp, memo, bodies, stars, report):
    try:
        bodies.update(eliminate(cfa, cfa.exit).loop_bodies)
    except UnreachableTarget:
        pass
    for header in sorted(bodies):
        body = bodies[header]
        try:
            evaluate(star_expr(body), interp, memo)
        except SolverError:
            continue
        tf = memo.get(body)
        rep = next((r for r in stars if r.body is tf), None)
        if rep is None:
            continue
        recs = [str(r) for r in rep.recurrences if not r.trivial]
        cfs = [str(c) for c, r in zip(rep.closed_forms, rep.recurrences) if not r.trivial]
        report.loops.append(LoopReport(cfa.loop_headers[header], recs, cfs, str(rep.guard), rep.note))


# -- concrete simulation -------------------------------------------------------------

@dataclass
class Outcome:
    state: dict
    trace: list

    @property
    def kind(self) -> str:
        return type(self).__name__


class Finished(Outcome):
    pass


class Blocked(Outcome):
    pass


class StepLimit(Outcome):
    pass


@dataclass
class AssertViolation(Outcome):
    line: int = 0
    vertex: int = 0


def simulate(program: Program | CFA, init: dict, max_steps: int = 1000,
             rng: Optional[random.Random] = None, havoc_range: int = 20) -> Outcome:
    """Small-step execution of the CFA; nondeterministic choices and havocs
    are resolved by ``rng``.  Assertions are checked on arrival at their
    vertex; a division by zero blocks the run."""
    cfa = program if isinstance(program, CFA) else build_cfa(program)
    rng = rng or random.Random(0)
    state = dict(init)
    v = cfa.entry
    trace = [v]
    out_edges = {}
    for e in cfa.edges:
        out_edges.setdefault(e.src, []).append(e)
    for _ in range(max_steps):
        if v in cfa.assert_points:
            cond, line = cfa.assert_points[v]
            try:
                holds = eval_bexpr(cond, state)
            except DivisionByZero:
                return Blocked(state, trace)
            if not holds:
                return AssertViolation(state, trace, line, v)
        enabled = []
        for e in out_edges.get(v, []):
            lab = e.label
            try:
                if isinstance(lab, Assume):
                    if eval_bexpr(lab.cond, state):
                        enabled.append((e, None))
                elif isinstance(lab, Assign):
                    enabled.append((e, eval_expr(lab.rhs, state)))
                elif isinstance(lab, Havoc):
                    enabled.append((e, rng.randint(-havoc_range, havoc_range)))
            except DivisionByZero:
                continue
        if not enabled:
            return (Finished if v == cfa.exit else Blocked)(state, trace)
        e, val = rng.choice(enabled)
        if isinstance(e.label, (Assign, Havoc)):
            state = dict(state)
            state[e.label.lhs] = val
        v = e.dst
        trace.append(v)
    return StepLimit(state, trace)


def random_state(vars, rng: random.Random, lo: int = -20, hi: int = 20) -> dict:
    return {x: rng.randint(lo, hi) for x in vars}


def find_violations(source: str, runs: int = 100, seed: int = 0, max_steps: int = 2000) -> list:
    """Assertion violations found by seeded random simulation."""
    cfa = build_cfa(parse(source))
    rng = random.Random(seed)
    found = []
    for _ in range(runs):
        out = simulate(cfa, random_state(cfa.vars, rng), max_steps, rng)
        if isinstance(out, AssertViolation):
            found.append(out)
    return found


# -- corpus -------------------------------------------------------------------------

@dataclass
class CorpusRow:
    file: str
    expect: Optional[str]
    proved: bool
    verdicts: list
    time_ms: float
    error: str = ""

    @property
    def status(self) -> str:
        if self.error:
            return "error"
        if self.expect == "unsafe" and self.proved:
            return "UNSOUND"
        if self.expect == "safe" and not self.proved:
            return "precision-miss"
        return "ok"


@dataclass
class CorpusSummary:
    rows: list

    @property
    def soundness_violations(self) -> list:
        return [r for r in self.rows if r.status == "UNSOUND"]

    @property
    def exit_code(self) -> int:
        return 2 if self.soundness_violations else 0

    def counts(self) -> dict:
        safe = [r for r in self.rows if r.expect == "safe"]
        unsafe = [r for r in self.rows if r.expect == "unsafe"]
        return {
            "files": len(self.rows),
            "safe": len(safe),
            "safe_proved": sum(r.proved for r in safe),
            "unsafe": len(unsafe),
            "unsafe_proved": sum(r.proved for r in unsafe),
            "errors": sum(1 for r in self.rows if r.error),
        }

    def table(self) -> str:
        lines = [f"{'file':32} {'expect':8} {'verdict':11} {'ms':>8}  status"]
        for r in self.rows:
            verdict = "error" if r.error else ("proved" if r.proved else "not-proved")
            lines.append(f"{r.file:32} {r.expect or '-':8} {verdict:11} {r.time_ms:8.0f}  {r.status}")
        c = self.counts()
        times = [r.time_ms for r in self.rows]
        lines.append(f"safe proved {c['safe_proved']}/{c['safe']}, "
                     f"unsafe proved {c['unsafe_proved']}/{c['unsafe']}")
        if times:
            lines.append(f"runtime mean {statistics.mean(times):.0f} ms, "
                         f"median {statistics.median(times):.0f} ms")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"rows": [asdict(r) | {"status": r.status} for r in self.rows],
                "counts": self.counts()}


def expected_verdict(source: str) -> Optional[str]:
    m = EXPECT.search(source)
    return m.group(1) if m else None


def _run_one(args) -> CorpusRow:
    path, cfg = args
    source = Path(path).read_text()
    expect = expected_verdict(source)
    start = time.perf_counter()
    try:
        rep = analyze(source, cfg, file=str(path))
        ms = (time.perf_counter() - start) * 1000
        return CorpusRow(Path(path).name, expect, rep.all_proved,
                         [a.verdict for a in rep.assertions], ms)
    except Exception as exc:  # a crash must never count as a proof
        ms = (time.perf_counter() - start) * 1000
        return CorpusRow(Path(path).name, expect, False, [], ms, f"{type(exc).__name__}: {exc}")


def run_corpus(directory, cfg: Optional[AnalysisConfig] = None, jobs: Optional[int] = None,
               pattern: str = "*.prog") -> CorpusSummary:
    cfg = cfg or AnalysisConfig()
    files = sorted(Path(directory).glob(pattern))
    if not files:
        return CorpusSummary([])
    jobs = jobs or min(len(files), os.cpu_count() or 1)
    work = [(str(f), cfg) for f in files]
    if jobs <= 1:
        rows = [_run_one(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, work))
    return CorpusSummary(rows)


def write_json(obj: dict, path: str):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=str)
