"""Linear equality and convex polyhedra domains, and symbolic abstraction of
formulas into them (affine hull and convex hull).

Polyhedra are rational: constraints keep exact rational coefficients and
integrality is only used when they are turned back into formula atoms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from . import linalg
from .formula import (FALSE, And, Atom, BoolConst, Formula, NonLinear, Or, conj,
                      eq, evaluate, fresh, le, linear_term, lt, negate, symbols)
from .smt import Solver, SolverError, SolverTimeout

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 512


class SizeBudgetExceeded(RuntimeError):
    pass


# -- affine systems -----------------------------------------------------------------

class AffineSystem:
    """Equations ``A x = b`` over ``symbols`` in reduced row echelon form.

    ``bottom`` marks the empty set (no models seen yet).
    """

    def __init__(self, symbols: Sequence[str], rows: Iterable[tuple] = (), bottom: bool = False):
        self.symbols = tuple(symbols)
        self.bottom = bottom
        self.rows: list[tuple[tuple, Fraction]] = []
        self.iterations = 0
        self.partial = False
        if bottom:
            return
        rows = [(list(a), Fraction(b)) for a, b in rows]
        if rows:
            n = len(self.symbols)
            r, pivots = linalg.rref([a + [b] for a, b in rows], n)
            for i in range(len(pivots), len(r)):
                if r[i][n] != 0:
                    self.bottom = True
                    return
            self.rows = [(tuple(r[i][:n]), r[i][n]) for i in range(len(pivots))]

    @classmethod
    def top(cls, symbols) -> AffineSystem:
        return cls(symbols)

    @classmethod
    def empty(cls, symbols) -> AffineSystem:
        return cls(symbols, bottom=True)

    @classmethod
    def point(cls, symbols, values: dict) -> AffineSystem:
        n = len(symbols)
        rows = [([Fraction(int(i == j)) for j in range(n)], values[s]) for i, s in enumerate(symbols)]
        return cls(symbols, rows)

    @classmethod
    def from_generators(cls, symbols, point: Sequence, dirs: Sequence[Sequence]) -> AffineSystem:
        n = len(symbols)
        normals = linalg.nullspace(dirs, n) if dirs else linalg.nullspace([], n)
        rows = [(c, sum(ci * pi for ci, pi in zip(c, point))) for c in normals]
        return cls(symbols, rows)

    def generators(self) -> tuple[list[Fraction], list[list[Fraction]]]:
        n = len(self.symbols)
        if not self.rows:
            return [Fraction(0)] * n, linalg.nullspace([], n)
        a = [list(r) for r, _ in self.rows]
        p = linalg.solve(a, [b for _, b in self.rows])
        return p, linalg.nullspace(a, n)

    def join(self, other: AffineSystem) -> AffineSystem:
        assert self.symbols == other.symbols
        if self.bottom:
            return other
        if other.bottom:
            return self
        p1, d1 = self.generators()
        p2, d2 = other.generators()
        dirs = d1 + d2 + [[b - a for a, b in zip(p1, p2)]]
        dirs = [d for d in dirs if any(d)]
        return AffineSystem.from_generators(self.symbols, p1, dirs)

    __or__ = join

    def matrix(self) -> tuple[list[list[Fraction]], list[Fraction]]:
        return [list(a) for a, _ in self.rows], [b for _, b in self.rows]

    def equations(self) -> list[Formula]:
        return [eq(linear_term(dict(zip(self.symbols, a))), b) for a, b in self.rows]

    def to_formula(self) -> Formula:
        if self.bottom:
            return FALSE
        return conj(self.equations())

    def __eq__(self, other):
        return (isinstance(other, AffineSystem) and self.symbols == other.symbols
                and self.bottom == other.bottom and self.rows == other.rows)

    def __repr__(self):
        if self.bottom:
            return "AffineSystem(bottom)"
        return f"AffineSystem({self.to_formula()})"


def affine_join(h1: AffineSystem, h2: AffineSystem) -> AffineSystem:
    return h1.join(h2)


def affine_hull(phi: Formula, syms: Sequence[str], solver: Solver,
                extra: Sequence[str] = (), timeout_ms: Optional[int] = None) -> AffineSystem:
    """Smallest affine set over ``syms`` containing the models of ``phi``.

    Other free symbols of ``phi`` are existentially quantified.  ``extra``
    are additional SMT-LIB assertions (e.g. uninterpreted function
    definitions) conjoined to ``phi``.
    """
    syms = tuple(syms)
    h = AffineSystem.empty(syms)
    iterations = 0
    with solver.scope():
        solver.add(phi)
        solver.declare(syms)
        for e in extra:
            solver.add(e)
        try:
            while True:
                r = solver.check(timeout_ms=timeout_ms)
                if r == "unsat":
                    break
                if r != "sat":
                    raise SolverTimeout("affine hull query unknown")
                iterations += 1
                m = solver.values(syms)
                h = h.join(AffineSystem.point(syms, m))
                if not h.rows:
                    break
                solver.add(negate(h.to_formula()))
        except SolverError as exc:
            log.debug("affine hull interrupted: %s", exc)
            h = _reverify(h, phi, syms, solver, extra, timeout_ms)
            h.partial = True
    h.iterations = iterations
    return h


def _reverify(h: AffineSystem, phi, syms, solver, extra, timeout_ms) -> AffineSystem:
    if h.bottom:
        return AffineSystem.top(syms)
    keep = []
    try:
        with solver.scope():
            solver.declare(syms)
            for x in extra:
                solver.add(x)
            for (a, b), e in zip(h.rows, h.equations()):
                if solver.entails(phi, e, timeout_ms=timeout_ms):
                    keep.append((a, b))
    except SolverError:
        pass
    return AffineSystem(syms, keep)


# -- polyhedra ------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """``sum(coeffs[s] * s) op rhs`` with ``op`` one of ``<=``, ``<``, ``=``."""

    coeffs: tuple  # sorted (symbol, Fraction) pairs, non-zero
    op: str
    rhs: Fraction

    @staticmethod
    def make(coeffs: dict, op: str, rhs) -> Constraint:
        items = sorted((s, Fraction(c)) for s, c in coeffs.items() if c != 0)
        rhs = Fraction(rhs)
        if items:
            lead = abs(items[0][1]) if op != "=" else items[0][1]
            items = [(s, c / lead) for s, c in items]
            rhs = rhs / lead
        return Constraint(tuple(items), op, rhs)

    @property
    def as_dict(self) -> dict:
        return dict(self.coeffs)

    @property
    def trivial(self) -> Optional[bool]:
        """Truth value of a constraint without symbols, else None."""
        if self.coeffs:
            return None
        return {"<=": 0 <= self.rhs, "<": 0 < self.rhs, "=": self.rhs == 0}[self.op]

    def symbols(self) -> set[str]:
        return {s for s, _ in self.coeffs}

    def coeff(self, s: str) -> Fraction:
        return dict(self.coeffs).get(s, Fraction(0))

    def holds(self, m: dict) -> bool:
        v = sum(c * m[s] for s, c in self.coeffs)
        return {"<=": v <= self.rhs, "<": v < self.rhs, "=": v == self.rhs}[self.op]

    def to_formula(self) -> Formula:
        t = linear_term(self.as_dict)
        return {"<=": le, "<": lt, "=": eq}[self.op](t, self.rhs)

    def __str__(self):
        return str(self.to_formula())


def constraint_of_atom(a: Atom) -> Constraint:
    coeffs = {}
    for b, c in a.term.coeffs.items():
        if isinstance(b, NonLinear):
            raise ValueError(f"non-linear atom {a}")
        coeffs[b] = c
    return Constraint.make(coeffs, a.op, -a.term.const)


class Polyhedron:
    """A finite conjunction of linear constraints, or bottom."""

    def __init__(self, constraints: Iterable[Constraint] = (), bottom: bool = False):
        self.bottom = bottom
        self.constraints: tuple[Constraint, ...] = ()
        if not bottom:
            cs = _normalise(constraints)
            if cs is None:
                self.bottom = True
            else:
                self.constraints = cs

    @classmethod
    def top(cls) -> Polyhedron:
        return cls()

    @classmethod
    def empty(cls) -> Polyhedron:
        return cls(bottom=True)

    @classmethod
    def of_atoms(cls, atoms: Iterable[Atom]) -> Polyhedron:
        return cls(constraint_of_atom(a) for a in atoms)

    def symbols(self) -> set[str]:
        return set().union(*(c.symbols() for c in self.constraints)) if self.constraints else set()

    def to_formula(self) -> Formula:
        if self.bottom:
            return FALSE
        return conj(c.to_formula() for c in self.constraints)

    def contains(self, m: dict) -> bool:
        return not self.bottom and all(c.holds(m) for c in self.constraints)

    def __len__(self):
        return len(self.constraints)

    def __repr__(self):
        if self.bottom:
            return "Polyhedron(bottom)"
        return f"Polyhedron({self.to_formula()})"


def _normalise(constraints: Iterable[Constraint]) -> Optional[tuple]:
    """Drop trivial and duplicate constraints, keep the tightest bound per
    direction and merge opposite bounds into equalities.  None means empty."""
    eqs: dict[tuple, Fraction] = {}
    ub: dict[tuple, tuple] = {}  # coeffs -> (rhs, strict)
    for c in constraints:
        t = c.trivial
        if t is True:
            continue
        if t is False:
            return None
        if c.op == "=":
            if c.coeffs in eqs and eqs[c.coeffs] != c.rhs:
                return None
            eqs[c.coeffs] = c.rhs
            continue
        cur = ub.get(c.coeffs)
        strict = c.op == "<"
        if cur is None or c.rhs < cur[0] or (c.rhs == cur[0] and strict):
            ub[c.coeffs] = (c.rhs, strict)
    out = []
    for k, (rhs, strict) in list(ub.items()):
        neg = tuple((s, -v) for s, v in k)
        if neg in ub:
            nrhs, nstrict = ub[neg]
            # k.x <= rhs and -k.x <= nrhs  i.e.  -nrhs <= k.x <= rhs
            if -nrhs > rhs or (-nrhs == rhs and (strict or nstrict)):
                return None
            if -nrhs == rhs:
                c = Constraint.make(dict(k), "=", rhs)
                if c.coeffs in eqs and eqs[c.coeffs] != c.rhs:
                    return None
                eqs[c.coeffs] = c.rhs
                continue
        out.append(Constraint(k, "<" if strict else "<=", rhs))
    for k, rhs in eqs.items():
        out.append(Constraint(k, "=", rhs))
    # bounds made redundant by equalities on the same direction
    eqset = {k: r for k, r in eqs.items()}
    final = []
    for c in out:
        if c.op != "=":
            k = c.coeffs
            neg = tuple((s, -v) for s, v in k)
            if k in eqset:
                ok = eqset[k] < c.rhs if c.op == "<" else eqset[k] <= c.rhs
                if not ok:
                    return None
                continue
            if neg in eqset:
                ok = -eqset[neg] < c.rhs if c.op == "<" else -eqset[neg] <= c.rhs
                if not ok:
                    return None
                continue
        final.append(c)
    return tuple(sorted(final, key=lambda c: (c.op != "=", c.coeffs, c.op, c.rhs)))


def _substitute(c: Constraint, s: str, value: dict, value_const: Fraction) -> Constraint:
    """Replace ``s`` by ``value . x + value_const`` in ``c``."""
    a = c.coeff(s)
    if a == 0:
        return c
    coeffs = c.as_dict
    del coeffs[s]
    for t, v in value.items():
        coeffs[t] = coeffs.get(t, Fraction(0)) + a * v
    return Constraint.make(coeffs, c.op, c.rhs - a * value_const)


def remove_redundant(cs: Sequence[Constraint]) -> list[Constraint]:
    """Drop inequalities implied by the others (floating-point LP).

    Only ever discards constraints, so a numerical misjudgement costs
    precision but never soundness.
    """
    ineq = [c for c in cs if c.op != "="]
    eqs = [c for c in cs if c.op == "="]
    if len(ineq) < 2 and not eqs:
        return list(cs)
    eqs = _independent_equalities(eqs)
    if not ineq:
        return eqs
    try:
        import numpy as np
        from scipy.optimize import linprog
    except ImportError:  # pragma: no cover - scipy is a declared dependency
        return eqs + ineq
    syms = sorted(set().union(*(c.symbols() for c in list(ineq) + eqs)))
    idx = {s: i for i, s in enumerate(syms)}

    def row(c):
        r = np.zeros(len(syms))
        for s, v in c.coeffs:
            r[idx[s]] = float(v)
        return r

    a_eq = np.array([row(c) for c in eqs]) if eqs else None
    b_eq = np.array([float(c.rhs) for c in eqs]) if eqs else None
    kept = list(ineq)
    i = 0
    while i < len(kept):
        c = kept[i]
        rest = kept[:i] + kept[i + 1:]
        a_ub = np.array([row(d) for d in rest]) if rest else None
        b_ub = np.array([float(d.rhs) for d in rest]) if rest else None
        try:
            res = linprog(-row(c), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                          bounds=[(None, None)] * len(syms), method="highs")
        except ValueError:
            res = None
        if res is not None and res.status == 0 and -res.fun <= float(c.rhs) + 1e-9 * (1 + abs(float(c.rhs))):
            if c.op == "<=" or -res.fun < float(c.rhs) - 1e-7:
                kept.pop(i)
                continue
        i += 1
    return eqs + kept


def _independent_equalities(eqs: Sequence[Constraint]) -> list[Constraint]:
    if len(eqs) < 2:
        return list(eqs)
    syms = sorted(set().union(*(c.symbols() for c in eqs)))
    rows = [[c.coeff(s) for s in syms] + [c.rhs] for c in eqs]
    r, pivots = linalg.rref(rows, len(syms))
    return [Constraint.make(dict(zip(syms, r[i][:len(syms)])), "=", r[i][len(syms)])
            for i in range(len(pivots))]


def project(p: Polyhedron, xs: Iterable[str], budget: int = DEFAULT_BUDGET,
            prune: bool = True) -> Polyhedron:
    """Eliminate ``xs`` by Gaussian elimination on equalities, then
    Fourier-Motzkin on inequalities (rational relaxation)."""
    if p.bottom:
        return p
    xs = [x for x in sorted(set(xs)) if x in p.symbols()]
    cs = list(p.constraints)
    while xs:
        # prefer a symbol with a defining equality, else the cheapest FM step
        defined = [(x, c) for x in xs for c in cs if c.op == "=" and c.coeff(x) != 0]
        if defined:
            x, c = defined[0]
            a = c.coeff(x)
            value = {s: -v / a for s, v in c.coeffs if s != x}
            const = c.rhs / a
            cs = [_substitute(d, x, value, const) for d in cs if d is not c]
        else:
            def cost(x):
                pos = sum(1 for c in cs if c.coeff(x) > 0)
                neg = sum(1 for c in cs if c.coeff(x) < 0)
                return pos * neg - pos - neg
            x = min(xs, key=cost)
            pos = [c for c in cs if c.coeff(x) > 0]
            neg = [c for c in cs if c.coeff(x) < 0]
            cs = [c for c in cs if c.coeff(x) == 0]
            for c1 in pos:
                a1 = c1.coeff(x)
                for c2 in neg:
                    a2 = -c2.coeff(x)
                    coeffs = {}
                    for s, v in c1.coeffs:
                        coeffs[s] = coeffs.get(s, 0) + v / a1
                    for s, v in c2.coeffs:
                        coeffs[s] = coeffs.get(s, 0) + v / a2
                    coeffs.pop(x, None)
                    op = "<" if "<" in (c1.op, c2.op) else "<="
                    cs.append(Constraint.make(coeffs, op, c1.rhs / a1 + c2.rhs / a2))
        xs.remove(x)
        q = Polyhedron(cs)
        if q.bottom:
            return q
        cs = list(q.constraints)
        if prune and len(cs) > 8:
            cs = remove_redundant(cs)
        if len(cs) > budget:
            raise SizeBudgetExceeded(f"{len(cs)} constraints while projecting")
    if prune:
        cs = remove_redundant(cs)
    return Polyhedron(cs)


def project_or_weaken(p: Polyhedron, xs: Iterable[str], budget: int = DEFAULT_BUDGET) -> Polyhedron:
    """``project`` with a sound fallback: on blowup keep only the constraints
    that do not mention eliminated symbols."""
    xs = set(xs)
    try:
        return project(p, xs, budget)
    except SizeBudgetExceeded:
        log.info("projection budget exceeded; weakening")
        return Polyhedron(c for c in p.constraints if not (c.symbols() & xs))


def poly_join(p: Polyhedron, q: Polyhedron, budget: int = DEFAULT_BUDGET) -> Polyhedron:
    """Closed convex hull of ``p`` union ``q`` via the lifted encoding
    ``x = y + z``, ``y`` in ``lam * p``, ``z`` in ``(1 - lam) * q``."""
    if p.bottom:
        return q
    if q.bottom:
        return p
    syms = sorted(p.symbols() | q.symbols())
    lam = fresh("lam")
    ys = {s: fresh("y") for s in syms}
    lifted = []
    for c in p.constraints:
        coeffs = {ys[s]: v for s, v in c.coeffs}
        coeffs[lam] = -c.rhs
        lifted.append(Constraint.make(coeffs, c.op if c.op != "<" else "<=", 0))
    for c in q.constraints:
        # z = x - y, scaled by (1 - lam)
        coeffs = {}
        for s, v in c.coeffs:
            coeffs[s] = coeffs.get(s, 0) + v
            coeffs[ys[s]] = coeffs.get(ys[s], 0) - v
        coeffs[lam] = coeffs.get(lam, 0) + c.rhs
        lifted.append(Constraint.make(coeffs, c.op if c.op != "<" else "<=", c.rhs))
    lifted.append(Constraint.make({lam: -1}, "<=", 0))
    lifted.append(Constraint.make({lam: 1}, "<=", 1))
    try:
        return project(Polyhedron(lifted), list(ys.values()) + [lam], budget)
    except SizeBudgetExceeded:
        log.info("join budget exceeded; keeping common constraints")
        common = set(p.constraints) & set(q.constraints)
        return Polyhedron(common)


# -- convex hull of a formula ------------------------------------------------------------

def implicant_cube(psi: Formula, m: dict) -> list[Atom]:
    """Atoms of a cube of ``psi``'s DNF satisfied by ``m``."""
    out: list[Atom] = []

    def go(f: Formula):
        if isinstance(f, BoolConst):
            if not f.value:
                raise ValueError("model does not satisfy formula")
        elif isinstance(f, Atom):
            out.append(f)
        elif isinstance(f, And):
            for g in f.args:
                go(g)
        elif isinstance(f, Or):
            for g in f.args:
                if evaluate(g, m):
                    go(g)
                    return
            raise ValueError("model does not satisfy formula")
        else:
            raise TypeError(f)

    go(psi)
    return list(dict.fromkeys(out))


@dataclass
class HullResult:
    polyhedron: Polyhedron
    iterations: int = 0
    partial: bool = False


def convex_hull(psi: Formula, xs: Iterable[str], solver: Solver,
                budget: int = DEFAULT_BUDGET, timeout_ms: Optional[int] = None) -> Polyhedron:
    return convex_hull_ex(psi, xs, solver, budget, timeout_ms).polyhedron


def convex_hull_ex(psi: Formula, xs: Iterable[str], solver: Solver,
                   budget: int = DEFAULT_BUDGET, timeout_ms: Optional[int] = None) -> HullResult:
    """Convex over-approximation of ``exists xs. psi`` by model-guided cube
    enumeration; each cube comes from ``psi`` itself, is projected, and
    joined into the running result."""
    xs = set(xs)
    syms = symbols(psi)
    p = Polyhedron.empty()
    it = 0
    with solver.scope():
        solver.add(psi)
        try:
            while True:
                r = solver.check(timeout_ms=timeout_ms)
                if r == "unsat":
                    break
                if r != "sat":
                    raise SolverTimeout("convex hull query unknown")
                it += 1
                m = solver.values(syms)
                cube = Polyhedron.of_atoms(implicant_cube(psi, m))
                p = poly_join(p, project_or_weaken(cube, xs, budget), budget)
                if not p.constraints:
                    break
                solver.add(negate(p.to_formula()))
        except SolverError as exc:
            log.debug("convex hull interrupted: %s", exc)
            partial = True
        else:
            partial = False
    if partial:
        keep = []
        for c in p.constraints:
            try:
                if solver.entails(psi, c.to_formula(), timeout_ms=timeout_ms):
                    keep.append(c)
            except SolverError:
                pass
        p = Polyhedron(keep)
    return HullResult(p, it, partial)
