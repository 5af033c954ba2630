"""Loop summarisation: recurrence (in)equations, closed forms, guards and
the iteration operator.

A loop body is a transition formula.  Recurrences relating each iteration's
post-state to its pre-state are extracted with solver help, solved into
closed forms that are polynomial in an iteration counter ``k``, and
assembled into a summary of any number of iterations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from . import linalg
from .formula import (TRUE, Formula, Term, TransitionFormula, conj, disj, eq, fresh,
                      ge, identity, is_linear, le, linear_term, make_atom, prime,
                      symbols)
from .linalg import PolyInK
from .polyhedra import SizeBudgetExceeded, affine_hull, convex_hull
from .smt import INF, Solver, SolverError, UNSAT

log = logging.getLogger(__name__)

GUARD_STRATEGIES = ("hull", "interval", "none")


@dataclass
class IterationConfig:
    guard_strategy: str = "hull"
    max_stratum: Optional[int] = None  # defaults to the number of variables
    timeout_ms: Optional[int] = None
    linearize_before_star: bool = True
    inequations: bool = True
    stratified: bool = True

    def __post_init__(self):
        if self.guard_strategy not in GUARD_STRATEGIES:
            raise ValueError(f"unknown guard strategy {self.guard_strategy!r}")
        if self.max_stratum is not None and self.max_stratum < 1:
            raise ValueError("max_stratum must be at least 1")


def _pairs(d: dict) -> tuple:
    return tuple(sorted((k, Fraction(v)) for k, v in d.items() if v != 0))


@dataclass(frozen=True)
class Recurrence:
    """``c.x' op c.x + b.y + d``; ``lhs`` holds ``c``, ``iv`` holds ``b``."""

    kind: str  # simple, stratified or inequation
    lhs: tuple
    op: str
    iv: tuple
    const: Fraction
    stratum: Optional[int] = None

    @property
    def var(self) -> str:
        """The defined variable of an equation recurrence."""
        return self.lhs[0][0]

    @property
    def trivial(self) -> bool:
        """``x' = x + 0``: the variable is unchanged by the body."""
        return self.kind != "inequation" and not self.iv and self.const == 0

    def formula(self) -> Formula:
        c = linear_term(dict(self.lhs))
        post = c.substitute({x: Term.var(prime(x)) for x, _ in self.lhs})
        rhs = c + linear_term(dict(self.iv), self.const)
        return make_atom(self.op, post, rhs)

    def __str__(self):
        post = [(c, prime(x)) for x, c in self.lhs]
        rhs = [(c, x) for x, c in self.lhs] + [(b, y) for y, b in self.iv] + [(self.const, "")]
        return f"{render_sum(post)} {self.op} {render_sum(rhs)}"


def render_sum(terms) -> str:
    """``c1*m1 + c2*m2 ...`` with signs folded; an empty monomial is a constant."""
    out = ""
    for c, m in terms:
        if c == 0:
            continue
        mag = abs(c)
        body = str(mag) if not m else m if mag == 1 else f"{mag}*{m}"
        if not out:
            out = body if c > 0 else "-" + body
        else:
            out += (" + " if c > 0 else " - ") + body
    return out or "0"


def _monomials(p: PolyInK, suffix: str = "") -> list:
    out = []
    for d, c in enumerate(p.coeffs):
        k = "" if d == 0 else "k" if d == 1 else f"k^{d}"
        m = "*".join(x for x in (k, suffix) if x)
        out.append((c, m))
    return out


@dataclass(frozen=True)
class ClosedForm:
    """``c.x(k) op sum_z p_z(k) * z(0) + p(k)``."""

    lhs: tuple
    op: str
    rhs: tuple  # (symbol, PolyInK) pairs
    const: PolyInK

    def value(self, k, init: dict) -> Fraction:
        return sum((p(k) * Fraction(init[z]) for z, p in self.rhs), self.const(k))

    def lhs_value(self, state: dict) -> Fraction:
        return sum(c * Fraction(state[x]) for x, c in self.lhs)

    def holds(self, k, init: dict, final: dict) -> bool:
        a, b = self.lhs_value(final), self.value(k, init)
        return {"=": a == b, "<=": a <= b, "<": a < b}[self.op]

    def instantiate(self, k: Term) -> Formula:
        """The closed form over pre-state ``x`` and post-state ``x'``."""
        post = linear_term({prime(x): c for x, c in self.lhs})
        rhs = poly_term(self.const, k)
        for z, p in self.rhs:
            rhs = rhs + poly_term(p, k) * Term.var(z)
        return make_atom(self.op, post, rhs)

    def __str__(self):
        lhs = render_sum([(c, f"{x}(k)") for x, c in self.lhs])
        terms = []
        for z, p in self.rhs:
            terms += _monomials(p, f"{z}(0)")
        terms += _monomials(self.const)
        return f"{lhs} {self.op} {render_sum(terms)}"


def poly_term(p: PolyInK, k: Term) -> Term:
    out = Term()
    power = Term.constant(1)
    for c in p.coeffs:
        out = out + power.scale(c)
        power = power * k
    return out


# -- recurrence detection -----------------------------------------------------------

def simple_recurrences(body: TransitionFormula, solver: Solver,
                       timeout_ms: Optional[int] = None) -> list[Recurrence]:
    """``x' = x + c`` for each variable where one exists; the candidate ``c``
    is read off a single model since it must agree with every model."""
    m = solver.get_model(body.phi, body.state_symbols, timeout_ms=timeout_ms)
    if m is UNSAT:
        return []
    out = []
    for x in body.vars:
        c = m[prime(x)] - m[x]
        rec = Recurrence("simple", ((x, Fraction(1)),), "=", (), c, 0)
        try:
            if solver.entails(body.phi, rec.formula(), timeout_ms=timeout_ms):
                out.append(rec)
        except SolverError:
            pass
    return out


def stratified_recurrences(body: TransitionFormula, solver: Solver,
                           max_stratum: Optional[int] = None,
                           timeout_ms: Optional[int] = None) -> list[Recurrence]:
    """Simple recurrences (stratum 0) followed by stratified ones, found
    stratum by stratum from the affine hull of the body."""
    found = {r.var: r for r in simple_recurrences(body, solver, timeout_ms)}
    n = len(body.vars)
    max_stratum = n if max_stratum is None else max_stratum
    hull = affine_hull(body.phi, body.state_symbols, solver, timeout_ms=timeout_ms)
    if hull.bottom or not hull.rows:
        return list(found.values())
    a, b = hull.matrix()
    index = {x: i for i, x in enumerate(body.vars)}
    for stratum in range(1, max_stratum + 1):
        ivs = {index[x] for x in found}
        new = {}
        for x in body.vars:
            if x in found:
                continue
            res = linalg.solve_lambda_system(a, b, index[x], ivs, n)
            if res is None:
                continue
            c, d = res
            iv = {body.vars[j]: c[j] for j in ivs if c[j] != 0}
            rec = Recurrence("stratified", ((x, Fraction(1)),), "=", _pairs(iv), -d, stratum)
            try:
                if solver.entails(body.phi, rec.formula(), timeout_ms=timeout_ms):
                    new[x] = rec
            except SolverError:
                pass
        if not new:
            break
        found.update(new)
    return sorted(found.values(), key=lambda r: (r.stratum, body.vars.index(r.var)))


def recurrence_inequations(body: TransitionFormula, siv, solver: Solver,
                           timeout_ms: Optional[int] = None) -> list[Recurrence]:
    """Linear recurrence (in)equations over the non-induction variables,
    read off the convex hull of the body in terms of difference variables
    ``d_x = x' - x``."""
    rest = [x for x in body.vars if x not in siv]
    if not rest:
        return []
    delta = {x: fresh("d_" + x) for x in rest}
    psi = conj([body.phi] + [eq(d, Term.var(prime(x)) - Term.var(x)) for x, d in delta.items()])
    keep = set(delta.values()) | set(siv)
    hull = convex_hull(psi, symbols(psi) - keep, solver, timeout_ms=timeout_ms)
    back = {d: x for x, d in delta.items()}
    out = []
    for c in hull.constraints:
        lhs = {back[s]: v for s, v in c.coeffs if s in back}
        if not lhs:
            continue
        iv = {s: -v for s, v in c.coeffs if s not in back}
        out.append(Recurrence("inequation", _pairs(lhs), c.op, _pairs(iv), c.rhs))
    return out


# -- closed forms --------------------------------------------------------------------

def close_recurrence(r: Recurrence, lower: dict) -> ClosedForm:
    """Solve ``r`` given closed forms ``lower`` (variable -> equation closed
    form) for every induction variable it mentions."""
    rhs: dict[str, PolyInK] = {x: PolyInK(c) for x, c in r.lhs}
    const = linalg.sum_closed_form(PolyInK(r.const))
    for y, b in r.iv:
        cf = lower[y]
        for z, p in cf.rhs:
            rhs[z] = rhs.get(z, PolyInK()) + linalg.sum_closed_form(p).scale(b)
        const = const + linalg.sum_closed_form(cf.const).scale(b)
    pairs = tuple(sorted((z, p) for z, p in rhs.items() if not p.is_zero()))
    return ClosedForm(r.lhs, r.op, pairs, const)


close_inequation = close_recurrence


def closed_forms(recs: list[Recurrence]) -> tuple[dict, list[ClosedForm]]:
    """Close equations stratum by stratum, then the inequations."""
    lower: dict[str, ClosedForm] = {}
    out = []
    for r in sorted((r for r in recs if r.kind != "inequation"), key=lambda r: r.stratum):
        cf = close_recurrence(r, lower)
        lower[r.var] = cf
        out.append(cf)
    for r in recs:
        if r.kind == "inequation":
            out.append(close_recurrence(r, lower))
    return lower, out


# -- guard, plus, star ------------------------------------------------------------------

def guard(body: TransitionFormula, strategy: str, solver: Solver,
          timeout_ms: Optional[int] = None) -> Formula:
    """Over-approximation of ``(exists Var'. body) and (exists Var. body)``."""
    if strategy == "hull":
        try:
            syms = symbols(body.phi)
            pre = convex_hull(body.phi, syms - set(body.vars), solver, timeout_ms=timeout_ms)
            post = convex_hull(body.phi, syms - set(body.primed), solver, timeout_ms=timeout_ms)
            return conj(pre.to_formula(), post.to_formula())
        except (SolverError, SizeBudgetExceeded) as exc:
            log.info("hull guard failed (%s); using intervals", exc)
            strategy = "interval"
    if strategy == "interval":
        try:
            atoms = []
            for s in body.state_symbols:
                lo, hi = solver.optimize_bounds(body.phi, Term.var(s), timeout_ms=timeout_ms)
                if lo > hi:
                    return conj(atoms + [le(1, 0)])
                if lo != -INF:
                    atoms.append(ge(s, lo))
                if hi != INF:
                    atoms.append(le(s, hi))
            return conj(atoms)
        except SolverError as exc:
            log.info("interval guard failed (%s)", exc)
    return TRUE


def plus(body: TransitionFormula, closed: list[ClosedForm], k: Optional[str] = None) -> TransitionFormula:
    """One or more iterations: ``exists k >= 1`` with every closed form."""
    k = k or fresh("k")
    kt = Term.var(k)
    phi = conj([ge(kt, 1)] + [cf.instantiate(kt) for cf in closed])
    return TransitionFormula(phi, body.vars, frozenset({k}))


@dataclass
class StarReport:
    body: TransitionFormula
    recurrences: list = field(default_factory=list)
    closed_forms: list = field(default_factory=list)
    guard: Formula = TRUE
    summary: Optional[TransitionFormula] = None
    note: str = ""


def star(body: TransitionFormula, cfg: Optional[IterationConfig] = None,
         solver: Optional[Solver] = None, report: Optional[list] = None) -> TransitionFormula:
    """Reflexive transitive closure over-approximation of ``body``."""
    cfg = cfg or IterationConfig()
    own = solver is None
    solver = solver or Solver()
    rep = StarReport(body)
    try:
        result = _star(body, cfg, solver, rep)
    finally:
        if own:
            solver.close()
    rep.summary = result
    if report is not None:
        report.append(rep)
    return result


def _star(body: TransitionFormula, cfg: IterationConfig, solver: Solver,
          rep: StarReport) -> TransitionFormula:
    vars = body.vars
    tmo = cfg.timeout_ms
    ident = identity(vars)
    try:
        if not is_linear(body.phi):
            if not cfg.linearize_before_star:
                rep.note = "non-linear body"
                return TransitionFormula(TRUE, vars)
            from .linearize import lin
            body = lin(body, solver, timeout_ms=tmo)
        sat = solver.is_sat(body.phi, timeout_ms=tmo)
        if sat == "unsat":
            rep.note = "body unsatisfiable"
            return ident
        if sat != "sat":
            rep.note = "solver unknown"
            return TransitionFormula(TRUE, vars)
    except SolverError as exc:
        rep.note = f"solver failure: {exc}"
        return TransitionFormula(TRUE, vars)
    try:
        if cfg.stratified:
            recs = stratified_recurrences(body, solver, cfg.max_stratum, tmo)
        else:
            recs = simple_recurrences(body, solver, tmo)
        if cfg.inequations:
            siv = {r.var for r in recs}
            recs = recs + recurrence_inequations(body, siv, solver, tmo)
        _, cfs = closed_forms(recs)
        g = guard(body, cfg.guard_strategy, solver, tmo)
    except (SolverError, SizeBudgetExceeded) as exc:
        log.info("star degraded: %s", exc)
        rep.note = f"degraded: {exc}"
        g = guard(body, "interval", solver, tmo) if cfg.guard_strategy != "none" else TRUE
        return TransitionFormula(disj(g, ident.phi), vars)
    rep.recurrences, rep.closed_forms, rep.guard = recs, cfs, g
    p = plus(body, cfs)
    return TransitionFormula(disj(conj(p.phi, g), ident.phi), vars, p.aux)
