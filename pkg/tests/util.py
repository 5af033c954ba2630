"""Shared oracles for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction
from pathlib import Path

from lra.analyzer import simulate
from lra.formula import (FALSE, Term, conj, disj, eq, le, ne, negate, prime, smt_symbol,
                         substitute, symbols, to_smt)
from lra.lang import Assign, Assume, Havoc, build_cfa, eval_bexpr, eval_expr, parse
from lra.pathexpr import edges_of, eliminate, evaluate, star
from lra.semantics import lra_interpretation
from lra.smt import UNSAT

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def corpus_source(name: str) -> str:
    return (CORPUS / f"{name}.prog").read_text()


DIVISION = corpus_source("division")

# x counts to 11, y sums x, z doubles x
STRATIFIED_LOOP = """
var x, y, z;
while (x <= 10) {
  x := x + 1;
  y := y + x;
  z := 2 * x;
}
"""

# one of x, y drops by one each round
DECREMENT_LOOP = """
var x, y;
while (x >= 0 && y >= 0) {
  if (*) { x := x - 1; } else { y := y - 1; }
}
"""


class Loops:
    """Loop bodies of a program as path expressions and transition formulas."""

    def __init__(self, source: str, solver, cfg=None):
        self.cfa = build_cfa(parse(source))
        self.stars: list = []
        self.interp = lra_interpretation(self.cfa.vars, solver, cfg, self.stars)
        self.memo: dict = {}
        self.bodies = eliminate(self.cfa, self.cfa.exit).loop_bodies
        # header vertices, outermost first
        self.headers = sorted(self.bodies)

    def body(self, i: int = 0):
        return evaluate(self.bodies[self.headers[i]], self.interp, self.memo)

    def summary(self, i: int = 0):
        """The star of loop ``i`` under the analysis interpretation."""
        return evaluate(star(self.bodies[self.headers[i]]), self.interp, self.memo)

    def report(self, i: int = 0):
        """The star report for loop ``i``."""
        body = self.body(i)
        self.summary(i)
        return next(r for r in self.stars if r.body is body)

    def edges(self, i: int = 0) -> set:
        return edges_of(self.bodies[self.headers[i]])

    def iterate(self, state: dict, i: int, rng: random.Random, steps: int = 10_000):
        """One concrete loop iteration from the header, or None when blocked."""
        return iterate_once(self.cfa, self.headers[i], self.edges(i), state, rng, steps)


def iterate_once(cfa, header, edges, state, rng, steps=10_000, havoc_range=20):
    out = {}
    for e in edges:
        out.setdefault(e.src, []).append(e)
    v, s = header, dict(state)
    for _ in range(steps):
        enabled = []
        for e in out.get(v, []):
            lab = e.label
            if isinstance(lab, Assume):
                if eval_bexpr(lab.cond, s):
                    enabled.append((e, None))
            elif isinstance(lab, Assign):
                enabled.append((e, eval_expr(lab.rhs, s)))
            elif isinstance(lab, Havoc):
                enabled.append((e, rng.randint(-havoc_range, havoc_range)))
        if not enabled:
            return None
        e, val = rng.choice(enabled)
        if not isinstance(e.label, Assume):
            s[e.label.lhs] = val
        v = e.dst
        if v == header:
            return s
    return None


def pair_holds(tf, pre: dict, post: dict, solver) -> bool:
    """Does the concrete pair (pre, post) satisfy ``tf``?  Aux symbols are
    existential, so the check is satisfiability after substitution."""
    if tf.phi == FALSE:
        return False
    mapping = {x: Term.constant(pre[x]) for x in tf.vars}
    mapping.update({prime(x): Term.constant(post[x]) for x in tf.vars})
    return solver.is_sat(substitute(tf.phi, mapping)) == "sat"


def run_iterations(loops: Loops, init: dict, n: int, rng, i: int = 0) -> list:
    """States after 0..n concrete iterations (shorter if blocked)."""
    states = [dict(init)]
    for _ in range(n):
        nxt = loops.iterate(states[-1], i, rng)
        if nxt is None:
            break
        states.append(nxt)
    return states


def point_model(vars, values) -> dict:
    return {x: Fraction(v) for x, v in zip(vars, values)}


def simulate_source(source: str, init: dict, seed: int = 0, steps: int = 1000):
    return simulate(parse(source), init, steps, random.Random(seed))


def fix_state(vars, pre: dict, post: dict):
    return conj([eq(x, pre[x]) for x in vars] + [eq(prime(x), post[x]) for x in vars])


def entailment_status(solver, phi, psi, exists=(), timeout_ms=2000) -> str:
    """``valid``, ``invalid`` or ``unknown`` for ``phi => exists. psi``."""
    exists = sorted(set(exists) & symbols(psi))
    with solver.scope():
        solver.add(phi)
        if exists:
            solver.declare(symbols(psi) - set(exists))
            binders = " ".join(f"({smt_symbol(s)} Int)" for s in exists)
            solver.add(f"(not (exists ({binders}) {to_smt(psi)}))")
        else:
            solver.add(negate(psi))
        r = solver.check(timeout_ms=timeout_ms)
    return {"unsat": "valid", "sat": "invalid"}.get(r, "unknown")


def sample_pairs(solver, tf, n, rng, box=8):
    """Up to ``n`` distinct (pre, post) pairs of ``tf``, found by the solver
    near random points of a box."""
    out = []
    blocked = []
    for _ in range(n):
        centre = {s: rng.randint(-box, box) for s in tf.state_symbols}
        near = conj([le(Term.var(s) - v, 3) for s, v in centre.items()]
                    + [le(Term.constant(v) - Term.var(s), 3) for s, v in centre.items()])
        m = solver.get_model(conj([tf.phi, near] + blocked), tf.state_symbols)
        if m is UNSAT:
            m = solver.get_model(conj([tf.phi] + blocked), tf.state_symbols)
            if m is UNSAT:
                break
        pre = {x: int(m[x]) for x in tf.vars}
        post = {x: int(m[prime(x)]) for x in tf.vars}
        out.append((pre, post))
        blocked.append(disj([ne(s, m[s]) for s in tf.state_symbols]))
    return out


def nonlinear_psi():
    """1 <= w = x < y < 5 and w*y <= z <= x*y."""
    w, x, y, z = (Term.var(s) for s in "wxyz")
    return conj(le(1, w), eq(w, x), le(x + 1, y), le(y, 4), le(w * y, z), le(z, x * y))
