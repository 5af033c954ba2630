"""Linear over-approximation of non-linear formulas.

Non-linear subterms are named by fresh symbols ("gammas"), then the linear
part is strengthened with equalities inferred by treating the operations as
uninterpreted functions, and with concrete and symbolic interval bounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .formula import (FALSE, Atom, Formula, NonLinear, Term, TransitionFormula, conj,
                      eq, fresh, ge, le, make_atom, map_atoms, symbols)
from .polyhedra import affine_hull
from .smt import INF, Solver, SolverError, smt_symbol, uf_name, uninterpret

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NonlinearDef:
    """``gamma = lhs op rhs`` with linear operands."""

    gamma: str
    op: str
    lhs: Term
    rhs: Term

    def term(self) -> Term:
        return Term({NonLinear(self.op, self.lhs, self.rhs): 1})

    def formula(self) -> Formula:
        return eq(self.gamma, self.term())

    def smt_uf(self) -> str:
        f = smt_symbol(uf_name(self.op))
        return f"(= {smt_symbol(self.gamma)} ({f} {uninterpret(self.lhs)} {uninterpret(self.rhs)}))"

    def __str__(self):
        return f"{self.gamma} = {self.term()}"


def normalize(phi: Formula) -> tuple[Formula, list[NonlinearDef]]:
    """Replace every non-linear node bottom-up by a gamma symbol.

    Syntactically equal nodes share a gamma, and the definitions hold
    globally, so ``phi`` is equivalent to ``exists gammas. linear /\\ defs``.
    """
    table: dict[tuple, str] = {}
    defs: list[NonlinearDef] = []

    def name(node: NonLinear) -> Term:
        left, right = lin_term(node.left), lin_term(node.right)
        key = (node.op, left, right) if node.op != "mul" else ("mul",) + tuple(sorted((left, right), key=lambda t: t.key))
        if key not in table:
            g = fresh("g")
            table[key] = g
            defs.append(NonlinearDef(g, node.op, *key[1:]))
        return Term.var(table[key])

    def lin_term(t: Term) -> Term:
        return t.map_bases(name)

    def atom(a: Atom) -> Formula:
        if a.term.is_linear:
            return a
        return make_atom(a.op, lin_term(a.term), 0)

    return map_atoms(phi, atom), defs


def infer_equalities(linear: Formula, defs: list[NonlinearDef], syms, solver: Solver,
                     timeout_ms: Optional[int] = None) -> list[Formula]:
    """Equations over ``syms`` and the gammas implied by ``linear`` when each
    operation is an uninterpreted function."""
    if not defs:
        return []
    syms = tuple(dict.fromkeys(list(syms) + [d.gamma for d in defs]))
    for d in defs:
        solver.declare_function(uf_name(d.op), 2)
    needed = set(syms)
    for d in defs:
        needed |= d.lhs.symbols() | d.rhs.symbols()
    try:
        with solver.scope():
            solver.declare(needed)
            h = affine_hull(linear, syms, solver, extra=[d.smt_uf() for d in defs],
                            timeout_ms=timeout_ms)
    except SolverError as exc:
        log.info("equality inference failed: %s", exc)
        return []
    if h.bottom:
        return [FALSE]
    return h.equations()


def _mul_interval(a: tuple, b: tuple) -> tuple:
    def mul(x, y):
        if x == 0 or y == 0:
            return Fraction(0)
        return x * y
    prods = [mul(x, y) for x in a for y in b]
    return min(prods), max(prods)


def _bounds(solver: Solver, phi: Formula, t: Term, timeout_ms) -> tuple:
    if t.is_constant:
        return (t.const, t.const)
    try:
        return solver.optimize_bounds(phi, t, timeout_ms=timeout_ms)
    except SolverError:
        return (-INF, INF)


def _range_atoms(g: Term, lo, hi) -> list[Formula]:
    out = []
    if lo != -INF:
        out.append(ge(g, lo))
    if hi != INF:
        out.append(le(g, hi))
    return out


def strengthen_intervals(linear: Formula, defs: list[NonlinearDef], solver: Solver,
                         timeout_ms: Optional[int] = None) -> tuple[list[Formula], set]:
    """Interval facts about each gamma; returns atoms and any fresh symbols."""
    out: list[Formula] = []
    extra_syms: set = set()
    for d in defs:
        g = Term.var(d.gamma)
        s, t = d.lhs, d.rhs
        if d.op == "mul":
            bs, bt = _bounds(solver, linear, s, timeout_ms), _bounds(solver, linear, t, timeout_ms)
            if bs[0] > bs[1] or bt[0] > bt[1]:
                return [FALSE], extra_syms
            lo, hi = _mul_interval(bs, bt)
            out += _range_atoms(g, lo, hi)
            # concrete interval of one operand times the other operand itself;
            # the direction depends on the sign of the symbolic operand
            for (clo, chi), sym, (slo, shi) in ((bs, t, bt), (bt, s, bs)):
                if sym.is_constant:
                    continue
                if slo >= 0:
                    if clo != -INF:
                        out.append(ge(g, sym.scale(clo)))
                    if chi != INF:
                        out.append(le(g, sym.scale(chi)))
                elif shi <= 0:
                    if chi != INF:
                        out.append(ge(g, sym.scale(chi)))
                    if clo != -INF:
                        out.append(le(g, sym.scale(clo)))
        elif t.is_constant:
            c = t.const
            if c == 0 or c.denominator != 1:
                continue
            # exact: s = c * q + r with 0 <= r < |c|
            if d.op == "div":
                r = fresh("r")
                extra_syms.add(r)
                out += [eq(s, g.scale(c) + Term.var(r)), ge(r, 0), le(r, abs(c) - 1)]
            else:
                q = fresh("q")
                extra_syms.add(q)
                out += [eq(s, Term.var(q).scale(c) + g), ge(g, 0), le(g, abs(c) - 1)]
        else:
            bt = _bounds(solver, linear, t, timeout_ms)
            if bt[0] >= 1:
                if d.op == "mod":
                    out += [ge(g, 0), le(g, t - 1)]
                    if bt[1] != INF:
                        out.append(le(g, bt[1] - 1))
                else:
                    bs = _bounds(solver, linear, s, timeout_ms)
                    if bs[0] >= 0:
                        out += [ge(g, 0), le(g, s)]
                    elif bs[1] <= 0:
                        out += [ge(g, s), le(g, 0)]
            elif bt[1] <= -1:
                if d.op == "mod":
                    out += [ge(g, 0), le(g, -t - 1)]
    return out, extra_syms


@dataclass
class Linearized:
    formula: Union[Formula, TransitionFormula]
    defs: list


def lin(phi: Union[Formula, TransitionFormula], solver: Solver,
        timeout_ms: Optional[int] = None, equalities: bool = True,
        intervals: bool = True):
    """Linear formula implied by ``phi``; gammas become auxiliary symbols."""
    return lin_ex(phi, solver, timeout_ms, equalities, intervals).formula


def lin_ex(phi: Union[Formula, TransitionFormula], solver: Solver,
           timeout_ms: Optional[int] = None, equalities: bool = True,
           intervals: bool = True) -> Linearized:
    """``lin`` together with the gamma definitions it introduced."""
    if isinstance(phi, TransitionFormula):
        f, defs = normalize(phi.phi)
        if not defs:
            return Linearized(phi, [])
        gammas = {d.gamma for d in defs}
        out, extra = _strengthen(f, defs, phi.state_symbols, solver, timeout_ms, equalities, intervals)
        tf = TransitionFormula(out, phi.vars, (phi.aux | gammas | extra) & symbols(out))
        return Linearized(tf, defs)
    f, defs = normalize(phi)
    if not defs:
        return Linearized(phi, [])
    syms = symbols(f) - {d.gamma for d in defs}
    out, _ = _strengthen(f, defs, sorted(syms), solver, timeout_ms, equalities, intervals)
    return Linearized(out, defs)


def _strengthen(f, defs, syms, solver, timeout_ms, equalities, intervals):
    try:
        sat = solver.is_sat(f, timeout_ms=timeout_ms)
    except SolverError:
        sat = "unknown"
    if sat == "unsat":
        return FALSE, set()
    facts: list[Formula] = []
    if equalities:
        facts += infer_equalities(f, defs, syms, solver, timeout_ms)
    extra: set = set()
    if intervals:
        base = conj([f] + facts)
        atoms, extra = strengthen_intervals(base, defs, solver, timeout_ms)
        facts += atoms
    return conj([f] + facts), extra


def definitions(defs: list[NonlinearDef]) -> Formula:
    return conj(d.formula() for d in defs)
