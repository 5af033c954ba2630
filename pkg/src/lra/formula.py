"""Terms, formulas and transition formulas.

Every symbol denotes a mathematical integer.  Terms are canonical linear
combinations over *bases*, where a base is either a symbol name or a
non-linear node (product, Euclidean division or modulo of two terms).
Atoms are normalised to ``t <= 0`` or ``t = 0`` with primitive integer
coefficients; strict inequalities and negations are tightened using
integrality, so formulas are always negation-free (NNF without ``not``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Callable, Iterable, Mapping, Union

Number = Union[int, Fraction]

_counter = itertools.count()


def fresh(prefix: str) -> str:
    """Return a symbol name that can never clash with a program variable."""
    return f"{prefix}#{next(_counter)}"


def prime(x: str) -> str:
    return x + "'"


def is_program_symbol(s: str) -> bool:
    return "#" not in s


class DivisionByZero(ArithmeticError):
    pass


def euclid_div(a: int, b: int) -> int:
    """Integer division with a non-negative remainder (SMT-LIB ``div``)."""
    if b == 0:
        raise DivisionByZero(f"{a} div 0")
    q = a // b
    if a - q * b < 0:
        q += 1
    return q


def euclid_mod(a: int, b: int) -> int:
    return a - b * euclid_div(a, b)


def _smt_num(c: Fraction) -> str:
    if c.denominator == 1:
        n = c.numerator
        return str(n) if n >= 0 else f"(- {-n})"
    return f"(/ {_smt_num(Fraction(c.numerator))} {c.denominator})"


def smt_symbol(s: str) -> str:
    return f"|{s}|"


class NonLinear:
    """A product, ``div`` or ``mod`` of two terms; used as a term base."""

    __slots__ = ("op", "left", "right", "key", "_hash")

    OPS = {"mul": "*", "div": "div", "mod": "mod"}

    def __init__(self, op: str, left: Term, right: Term):
        if op == "mul" and right.key < left.key:
            left, right = right, left
        self.op = op
        self.left = left
        self.right = right
        self.key = f"({self.OPS[op]} {left.key} {right.key})"
        self._hash = hash(self.key)

    def __eq__(self, other):
        return isinstance(other, NonLinear) and self.key == other.key

    def __hash__(self):
        return self._hash

    def symbols(self) -> set[str]:
        return self.left.symbols() | self.right.symbols()

    def smt(self) -> str:
        return f"({self.OPS[self.op]} {self.left.smt()} {self.right.smt()})"

    def __str__(self):
        sym = {"mul": "*", "div": "/", "mod": "%"}[self.op]
        return f"({self.left} {sym} {self.right})"


Base = Union[str, NonLinear]


def _base_key(b: Base) -> str:
    return b if isinstance(b, str) else "~" + b.key


class Term:
    """Immutable canonical linear combination ``sum(c_i * base_i) + const``."""

    __slots__ = ("coeffs", "const", "key", "_hash")

    def __init__(self, coeffs: Mapping[Base, Number] | None = None, const: Number = 0):
        items = sorted(
            ((b, Fraction(c)) for b, c in (coeffs or {}).items() if c != 0),
            key=lambda bc: _base_key(bc[0]),
        )
        self.coeffs: dict[Base, Fraction] = dict(items)
        self.const = Fraction(const)
        parts = [f"{c}*{_base_key(b)}" for b, c in items]
        self.key = "[" + " ".join(parts) + f" |{self.const}]"
        self._hash = hash(self.key)

    @staticmethod
    def var(name: str) -> Term:
        return Term({name: 1})

    @staticmethod
    def constant(c: Number) -> Term:
        return Term({}, c)

    def __eq__(self, other):
        return isinstance(other, Term) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Term({self})"

    # arithmetic ----------------------------------------------------------
    def __add__(self, other) -> Term:
        other = as_term(other)
        coeffs = dict(self.coeffs)
        for b, c in other.coeffs.items():
            coeffs[b] = coeffs.get(b, 0) + c
        return Term(coeffs, self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> Term:
        return self.scale(-1)

    def __sub__(self, other) -> Term:
        return self + (-as_term(other))

    def __rsub__(self, other) -> Term:
        return as_term(other) - self

    def scale(self, c: Number) -> Term:
        c = Fraction(c)
        if c == 0:
            return Term()
        return Term({b: v * c for b, v in self.coeffs.items()}, self.const * c)

    def __mul__(self, other) -> Term:
        other = as_term(other)
        if other.is_constant:
            return self.scale(other.const)
        if self.is_constant:
            return other.scale(self.const)
        # distribute, so products are sums of canonical monomials
        out = Term.constant(self.const * other.const)
        out = out + Term(other.coeffs).scale(self.const) + Term(self.coeffs).scale(other.const)
        for b1, c1 in self.coeffs.items():
            for b2, c2 in other.coeffs.items():
                out = out + Term({_monomial(_factors(b1) + _factors(b2)): c1 * c2})
        return out

    __rmul__ = __mul__

    def div(self, other) -> Term:
        other = as_term(other)
        if self.is_constant and other.is_constant and other.const != 0 \
                and self.const.denominator == 1 and other.const.denominator == 1:
            return Term.constant(euclid_div(int(self.const), int(other.const)))
        return Term({NonLinear("div", self, other): 1})

    def mod(self, other) -> Term:
        other = as_term(other)
        if self.is_constant and other.is_constant and other.const != 0 \
                and self.const.denominator == 1 and other.const.denominator == 1:
            return Term.constant(euclid_mod(int(self.const), int(other.const)))
        return Term({NonLinear("mod", self, other): 1})

    # queries -------------------------------------------------------------
    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    @property
    def is_linear(self) -> bool:
        return all(isinstance(b, str) for b in self.coeffs)

    def coeff(self, name: str) -> Fraction:
        return self.coeffs.get(name, Fraction(0))

    def symbols(self) -> set[str]:
        out: set[str] = set()
        for b in self.coeffs:
            if isinstance(b, str):
                out.add(b)
            else:
                out |= b.symbols()
        return out

    def nonlinear_nodes(self) -> list[NonLinear]:
        """Non-linear nodes in bottom-up order (arguments before parents)."""
        out: list[NonLinear] = []
        for b in self.coeffs:
            if isinstance(b, NonLinear):
                out += b.left.nonlinear_nodes()
                out += b.right.nonlinear_nodes()
                out.append(b)
        return out

    def substitute(self, mapping: Mapping[str, Term]) -> Term:
        if not mapping:
            return self
        result = Term.constant(self.const)
        for b, c in self.coeffs.items():
            if isinstance(b, str):
                result = result + (mapping[b] if b in mapping else Term.var(b)).scale(c)
            else:
                left = b.left.substitute(mapping)
                right = b.right.substitute(mapping)
                node = {"mul": Term.__mul__, "div": Term.div, "mod": Term.mod}[b.op](left, right)
                result = result + node.scale(c)
        return result

    def map_bases(self, fn: Callable[[NonLinear], Term]) -> Term:
        """Replace each top-level non-linear base ``b`` by ``fn(b)``."""
        result = Term.constant(self.const)
        for b, c in self.coeffs.items():
            result = result + (Term.var(b) if isinstance(b, str) else fn(b)).scale(c)
        return result

    def evaluate(self, model: Mapping[str, Number]) -> Fraction:
        total = self.const
        for b, c in self.coeffs.items():
            if isinstance(b, str):
                total += c * Fraction(model[b])
            else:
                left = b.left.evaluate(model)
                right = b.right.evaluate(model)
                if b.op == "mul":
                    v = left * right
                else:
                    if left.denominator != 1 or right.denominator != 1:
                        raise ValueError("integer division of a non-integer")
                    fn = euclid_div if b.op == "div" else euclid_mod
                    v = Fraction(fn(int(left), int(right)))
                total += c * v
        return total

    def smt(self) -> str:
        parts = []
        for b, c in self.coeffs.items():
            s = smt_symbol(b) if isinstance(b, str) else b.smt()
            parts.append(s if c == 1 else f"(* {_smt_num(c)} {s})")
        if self.const != 0 or not parts:
            parts.append(_smt_num(self.const))
        return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"

    def __str__(self):
        out = ""
        for b, c in self.coeffs.items():
            name = str(b)
            mag = abs(c)
            body = name if mag == 1 else f"{mag}*{name}"
            if not out:
                out = body if c > 0 else "-" + body
            else:
                out += (" + " if c > 0 else " - ") + body
        if self.const != 0 or not out:
            if not out:
                out = str(self.const)
            else:
                out += (" + " if self.const > 0 else " - ") + str(abs(self.const))
        return out


def _unit_base(t: Term):
    if t.const == 0 and len(t.coeffs) == 1:
        (b, c), = t.coeffs.items()
        if c == 1:
            return b
    return None


def _factors(b: Base) -> list:
    if isinstance(b, NonLinear) and b.op == "mul":
        lb, rb = _unit_base(b.left), _unit_base(b.right)
        if lb is not None and rb is not None:
            return _factors(lb) + _factors(rb)
    return [b]


def _monomial(factors: list) -> Base:
    factors = sorted(factors, key=_base_key)
    acc = factors[0]
    for f in factors[1:]:
        acc = NonLinear("mul", Term({acc: 1}), Term({f: 1}))
    return acc


def as_term(x) -> Term:
    if isinstance(x, Term):
        return x
    if isinstance(x, str):
        return Term.var(x)
    return Term.constant(x)


def linear_term(coeffs: Mapping[str, Number], const: Number = 0) -> Term:
    return Term(coeffs, const)


# ---------------------------------------------------------------------------
# formulas


class Formula:
    __slots__ = ()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)


class BoolConst(Formula):
    __slots__ = ("value",)

    def __init__(self, value: bool):
        self.value = value

    def __eq__(self, other):
        return isinstance(other, BoolConst) and other.value == self.value

    def __hash__(self):
        return hash(self.value)

    def __repr__(self):
        return "true" if self.value else "false"

    __str__ = __repr__


TRUE = BoolConst(True)
FALSE = BoolConst(False)


class Atom(Formula):
    """``term <= 0`` or ``term = 0``; construct through :func:`make_atom`."""

    __slots__ = ("op", "term", "_hash")

    def __init__(self, op: str, term: Term):
        assert op in ("<=", "=")
        self.op = op
        self.term = term
        self._hash = hash((op, term.key))

    def __eq__(self, other):
        return isinstance(other, Atom) and self.op == other.op and self.term == other.term

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Atom({self})"

    def __str__(self):
        lhs = Term({b: c for b, c in self.term.coeffs.items() if c > 0})
        rhs = Term({b: -c for b, c in self.term.coeffs.items() if c < 0}, -self.term.const)
        if lhs.is_constant and self.op == "<=":
            return f"{Term(rhs.coeffs)} >= {-rhs.const}"
        return f"{lhs} {self.op} {rhs}"


class _Nary(Formula):
    __slots__ = ("args", "_hash")

    def __init__(self, args: tuple[Formula, ...]):
        self.args = args
        self._hash = hash((type(self).__name__, args))

    def __eq__(self, other):
        return type(other) is type(self) and other.args == self.args

    def __hash__(self):
        return self._hash


class And(_Nary):
    __slots__ = ()

    def __str__(self):
        return " && ".join(_paren(a) for a in self.args)


class Or(_Nary):
    __slots__ = ()

    def __str__(self):
        return " || ".join(_paren(a) for a in self.args)


def _paren(f: Formula) -> str:
    return f"({f})" if isinstance(f, _Nary) else str(f)


def make_atom(op: str, lhs, rhs=0) -> Formula:
    """Build ``lhs op rhs`` for op in ``<, <=, =, >=, >, !=``."""
    lhs, rhs = as_term(lhs), as_term(rhs)
    if op in (">", ">="):
        lhs, rhs, op = rhs, lhs, {">": "<", ">=": "<="}[op]
    if op == "!=":
        return disj(make_atom("<", lhs, rhs), make_atom(">", lhs, rhs))
    t = lhs - rhs
    # scale to integer coefficients
    dens = [c.denominator for c in t.coeffs.values()] + [t.const.denominator]
    lcm = reduce(lambda a, b: a * b // math.gcd(a, b), dens, 1)
    t = t.scale(lcm)
    if op == "<":
        t = t + 1
        op = "<="
    if t.is_constant:
        ok = t.const <= 0 if op == "<=" else t.const == 0
        return TRUE if ok else FALSE
    g = abs(reduce(math.gcd, (int(c) for c in t.coeffs.values())))
    const = int(t.const)
    if op == "=":
        if const % g:
            return FALSE
        t = t.scale(Fraction(1, g))
        if next(iter(t.coeffs.values())) < 0:
            t = -t
        return Atom("=", t)
    # sum(a_i x_i) + c <= 0 with g | a_i  ==>  sum(a_i/g x_i) + ceil(c/g) <= 0
    t = Term({b: c / g for b, c in t.coeffs.items()}, -((-const) // g))
    return Atom("<=", t)


def le(a, b) -> Formula:
    return make_atom("<=", a, b)


def lt(a, b) -> Formula:
    return make_atom("<", a, b)


def ge(a, b) -> Formula:
    return make_atom(">=", a, b)


def gt(a, b) -> Formula:
    return make_atom(">", a, b)


def eq(a, b) -> Formula:
    return make_atom("=", a, b)


def ne(a, b) -> Formula:
    return make_atom("!=", a, b)


def conj(*fs) -> Formula:
    if len(fs) == 1 and not isinstance(fs[0], Formula):
        fs = tuple(fs[0])
    out: list[Formula] = []
    seen: set[Formula] = set()
    for f in fs:
        parts = f.args if isinstance(f, And) else (f,)
        for p in parts:
            if p == TRUE:
                continue
            if p == FALSE:
                return FALSE
            if p not in seen:
                seen.add(p)
                out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*fs) -> Formula:
    if len(fs) == 1 and not isinstance(fs[0], Formula):
        fs = tuple(fs[0])
    out: list[Formula] = []
    seen: set[Formula] = set()
    for f in fs:
        parts = f.args if isinstance(f, Or) else (f,)
        for p in parts:
            if p == FALSE:
                continue
            if p == TRUE:
                return TRUE
            if p not in seen:
                seen.add(p)
                out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def negate(f: Formula) -> Formula:
    if isinstance(f, BoolConst):
        return FALSE if f.value else TRUE
    if isinstance(f, Atom):
        if f.op == "<=":
            return make_atom(">", f.term, 0)
        return make_atom("!=", f.term, 0)
    if isinstance(f, And):
        return disj(negate(a) for a in f.args)
    if isinstance(f, Or):
        return conj(negate(a) for a in f.args)
    raise TypeError(f)


def implies(a: Formula, b: Formula) -> Formula:
    return disj(negate(a), b)


def map_atoms(f: Formula, fn: Callable[[Atom], Formula]) -> Formula:
    if isinstance(f, Atom):
        return fn(f)
    if isinstance(f, And):
        return conj(map_atoms(a, fn) for a in f.args)
    if isinstance(f, Or):
        return disj(map_atoms(a, fn) for a in f.args)
    return f


def atoms(f: Formula) -> Iterable[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, _Nary):
        for a in f.args:
            yield from atoms(a)


def symbols(f: Formula) -> set[str]:
    out: set[str] = set()
    for a in atoms(f):
        out |= a.term.symbols()
    return out


def is_linear(f: Formula) -> bool:
    return all(a.term.is_linear for a in atoms(f))


def substitute(f: Formula, mapping: Mapping[str, Term]) -> Formula:
    """Simultaneous (capture-free: formulas have no binders) substitution."""
    if not mapping:
        return f
    mapping = {k: as_term(v) for k, v in mapping.items()}
    return map_atoms(f, lambda a: make_atom(a.op, a.term.substitute(mapping), 0))


def rename(f: Formula, mapping: Mapping[str, str]) -> Formula:
    return substitute(f, {k: Term.var(v) for k, v in mapping.items()})


def evaluate(f: Formula, model: Mapping[str, Number]) -> bool:
    if isinstance(f, BoolConst):
        return f.value
    if isinstance(f, Atom):
        v = f.term.evaluate(model)
        return v <= 0 if f.op == "<=" else v == 0
    if isinstance(f, And):
        return all(evaluate(a, model) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, model) for a in f.args)
    raise TypeError(f)


def to_smt(f: Formula) -> str:
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"({f.op} {f.term.smt()} 0)"
    op = "and" if isinstance(f, And) else "or"
    return f"({op} " + " ".join(to_smt(a) for a in f.args) + ")"


def top_conjuncts(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, And):
        return f.args
    if f == TRUE:
        return ()
    return (f,)


def size(f: Formula) -> int:
    if isinstance(f, _Nary):
        return 1 + sum(size(a) for a in f.args)
    return 1


# ---------------------------------------------------------------------------
# transition formulas


@dataclass(frozen=True)
class TransitionFormula:
    """A formula over ``vars`` (pre-state), their primed copies (post-state)
    and existentially quantified auxiliary symbols ``aux``."""

    phi: Formula
    vars: tuple[str, ...]
    aux: frozenset = frozenset()

    @cached_property
    def primed(self) -> tuple[str, ...]:
        return tuple(prime(x) for x in self.vars)

    @property
    def state_symbols(self) -> tuple[str, ...]:
        return self.vars + self.primed

    @property
    def is_linear(self) -> bool:
        return is_linear(self.phi)

    def with_phi(self, phi: Formula, aux=None) -> TransitionFormula:
        aux = self.aux if aux is None else frozenset(aux)
        return TransitionFormula(phi, self.vars, aux & symbols(phi))

    def __str__(self):
        return str(self.phi)


def stable(xs: Iterable[str]) -> Formula:
    """The frame condition ``x' = x`` for every ``x`` in ``xs``."""
    return conj(eq(prime(x), x) for x in xs)


def identity(vars: tuple[str, ...]) -> TransitionFormula:
    return TransitionFormula(stable(vars), tuple(vars))


def havoc_all(vars: tuple[str, ...]) -> TransitionFormula:
    return TransitionFormula(TRUE, tuple(vars))


def substitute_tf(tf: TransitionFormula, mapping: Mapping[str, Term]) -> TransitionFormula:
    return tf.with_phi(substitute(tf.phi, mapping), tf.aux)


def _freshen_aux(tf: TransitionFormula, avoid: set) -> TransitionFormula:
    clash = tf.aux & avoid
    if not clash:
        return tf
    mapping = {s: fresh(s.split("#")[0]) for s in clash}
    return TransitionFormula(rename(tf.phi, mapping), tf.vars,
                             frozenset(mapping.get(s, s) for s in tf.aux))


def propagate_equalities(phi: Formula, eliminable: set, prefer: set = frozenset()) -> Formula:
    """Substitute away symbols of ``eliminable`` defined by top-level unit
    equalities.  Equivalent up to existential quantification of those symbols."""
    parts = list(top_conjuncts(phi))
    while True:
        pick = None
        for i, p in enumerate(parts):
            if not isinstance(p, Atom) or p.op != "=":
                continue
            cands = [s for s, c in p.term.coeffs.items()
                     if isinstance(s, str) and s in eliminable and abs(c) == 1
                     and not any(s in b.symbols() for b in p.term.coeffs if isinstance(b, NonLinear))]
            if cands:
                cands.sort(key=lambda s: (s not in prefer, s))
                pick = (i, cands[0])
                if cands[0] in prefer:
                    break
        if pick is None:
            break
        i, s = pick
        atom = parts.pop(i)
        c = atom.term.coeff(s)
        rest = atom.term - Term.var(s).scale(c)
        value = rest.scale(-1 / c)
        new = substitute(conj(parts), {s: value}) if parts else TRUE
        if new == FALSE:
            return FALSE
        parts = list(top_conjuncts(new))
    return conj(parts)


def seq(phi: TransitionFormula, psi: TransitionFormula) -> TransitionFormula:
    """Relational composition ``phi ; psi`` with fresh intermediate symbols."""
    assert phi.vars == psi.vars
    psi = _freshen_aux(psi, set(phi.aux))
    mids = {x: fresh(x + "''") for x in phi.vars}
    a = rename(phi.phi, {prime(x): m for x, m in mids.items()})
    b = rename(psi.phi, mids)
    body = conj(a, b)
    aux = set(phi.aux) | set(psi.aux) | set(mids.values())
    body = propagate_equalities(body, aux, prefer=set(mids.values()))
    return TransitionFormula(body, phi.vars, frozenset(aux & symbols(body)))


def choice(phi: TransitionFormula, psi: TransitionFormula) -> TransitionFormula:
    assert phi.vars == psi.vars
    return TransitionFormula(disj(phi.phi, psi.phi), phi.vars, phi.aux | psi.aux)
