import itertools
import random
from fractions import Fraction

import pytest
import sympy

from lra.formula import BoolConst, Term, conj, disj, eq, evaluate, le, linear_term, lt
from lra.lang import build_cfa, parse
from lra.linalg import solve
from lra.pathexpr import eliminate, evaluate as evaluate_path
from lra.polyhedra import (AffineSystem, Constraint, Polyhedron, SizeBudgetExceeded, affine_hull,
                           affine_join, convex_hull, convex_hull_ex, implicant_cube, poly_join,
                           project, project_or_weaken)
from lra.semantics import lra_interpretation

from util import DIVISION

X, Y, Z = Term.var("x"), Term.var("y"), Term.var("z")


# -- affine systems ----------------------------------------------------------------

def test_affine_join_two_points(solver):
    syms = ("x", "y")
    h = affine_join(AffineSystem.point(syms, {"x": 1, "y": 2}),
                    AffineSystem.point(syms, {"x": 3, "y": 4}))
    assert len(h.rows) == 1
    assert solver.equivalent(h.to_formula(), eq(Y - X, 1))


def test_affine_join_bottom_and_idempotent():
    syms = ("x", "y")
    h = AffineSystem(syms, [([1, 1], 3)])
    assert affine_join(h, AffineSystem.empty(syms)) == h
    assert affine_join(AffineSystem.empty(syms), h) == h
    assert affine_join(h, h) == h


def test_affine_hull_of_disjunction(solver):
    phi = disj(conj(eq("x'", X + 1), eq("y'", 0)), conj(eq("x'", X + 1), eq("y'", 1)))
    syms = ("x", "y", "x'", "y'")
    h = affine_hull(phi, syms, solver)
    assert solver.equivalent(h.to_formula(), eq("x'", X + 1))


def test_affine_hull_single_equation(solver):
    h = affine_hull(eq("x'", X + 1), ("x", "x'"), solver)
    assert solver.equivalent(h.to_formula(), eq("x'", X + 1))
    assert h.iterations <= 2 + 1


def division_outer_body(solver):
    cfa = build_cfa(parse(DIVISION))
    res = eliminate(cfa, 8)
    return evaluate_path(res.loop_bodies[2], lra_interpretation(cfa.vars, solver))


def test_affine_hull_division_outer(solver):
    body = division_outer_body(solver)
    h = affine_hull(body.phi, body.state_symbols, solver)
    f = h.to_formula()
    assert solver.entails(f, eq("q'", Term.var("q") + 1))
    assert solver.entails(f, eq("r'", Term.var("r") - Y))
    assert solver.entails(body.phi, f)


def test_affine_hull_unsat(solver):
    h = affine_hull(lt("x", "x"), ("x",), solver)
    assert h.bottom and h.iterations == 0


# -- affine hull against a per-disjunct oracle ------------------------------------

BOX = 2


def rand_linear(rng, syms):
    t = Term.constant(rng.randint(-2, 2))
    for s in rng.sample(syms, rng.randint(1, min(2, len(syms)))):
        t = t + Term.var(s).scale(rng.choice([-2, -1, 1, 2]))
    return t


def rand_cube_atoms(rng, syms):
    """A box-bounded cube: the box keeps integer enumeration exact."""
    atoms = [le(-BOX, s) for s in syms] + [le(s, BOX) for s in syms]
    for _ in range(rng.randint(0, 3)):
        op = rng.choice([eq, eq, le, lt])
        atoms.append(op(rand_linear(rng, syms), 0))
    return atoms


def rand_disjunct(rng, syms):
    return conj(rand_cube_atoms(rng, syms))


def integer_points(phi, syms):
    return [p for p in itertools.product(range(-BOX, BOX + 1), repeat=len(syms))
            if evaluate(phi, dict(zip(syms, p)))]


def oracle_affine_generators(points):
    """Base point and direction vectors of the affine hull of ``points``."""
    if not points:
        return None
    p0 = points[0]
    dirs = [[a - b for a, b in zip(p, p0)] for p in points[1:]]
    return list(p0), dirs


def oracle_affine_formula(syms, gens):
    if gens is None:
        return None
    p0, dirs = gens
    m = sympy.Matrix(dirs) if dirs else sympy.zeros(0, len(syms))
    normals = m.nullspace() if dirs else [sympy.eye(len(syms))[:, i] for i in range(len(syms))]
    out = []
    for nv in normals:
        coeffs = {s: Fraction(int(c.p), int(c.q)) for s, c in zip(syms, nv)}
        out.append(eq(linear_term(coeffs), sum(coeffs[s] * v for s, v in zip(syms, p0))))
    return conj(out)


@pytest.mark.parametrize("seed", range(100))
def test_affine_hull_matches_oracle(seed, solver):
    rng = random.Random(seed)
    syms = ["a", "b", "c", "d"][:rng.randint(1, 4)]
    disjuncts = [rand_disjunct(rng, syms) for _ in range(rng.randint(1, 3))]
    phi = disj(disjuncts)
    # per-disjunct hulls, then their join (union of generators)
    base, dirs = None, []
    for d in disjuncts:
        g = oracle_affine_generators(integer_points(d, syms))
        if g is None:
            continue
        if base is None:
            base = g[0]
        dirs += g[1] + [[a - b for a, b in zip(g[0], base)]]
    h = affine_hull(phi, syms, solver)
    assert h.iterations <= 2 * len(syms) + 1
    if base is None:
        assert h.bottom
        return
    want = oracle_affine_formula(syms, (base, [d for d in dirs if any(d)]))
    got = h.to_formula()
    assert solver.entails(got, want) and solver.entails(want, got)


@pytest.mark.parametrize("seed", range(20))
def test_affine_hull_properties(seed, solver):
    rng = random.Random(500 + seed)
    syms = ["a", "b", "c"]
    phi = disj([rand_disjunct(rng, syms) for _ in range(2)])
    h = affine_hull(phi, syms, solver)
    if h.bottom:
        return
    f = h.to_formula()
    # (1) implied by phi
    assert solver.entails(phi, f)
    # (2) random implied equations, combinations of the rows, follow from h
    a, b = h.matrix()
    for _ in range(50 if a else 0):
        lam = [rng.randint(-3, 3) for _ in a]
        coeffs = {s: sum(l * row[j] for l, row in zip(lam, a)) for j, s in enumerate(syms)}
        e = eq(linear_term(coeffs), sum(l * bi for l, bi in zip(lam, b)))
        assert solver.entails(phi, e) and solver.entails(f, e)
    # (3) rows are independent: none follows from the others
    eqs = h.equations()
    for i, e in enumerate(eqs):
        assert not solver.entails(conj(eqs[:i] + eqs[i + 1:]), e)


# -- polyhedra ----------------------------------------------------------------------

def poly(*atoms):
    return Polyhedron.of_atoms(atoms)


def test_project_transitivity(solver):
    p = poly(le(X, Y), le(Y, Z))
    q = project(p, ["y"])
    assert solver.equivalent(q.to_formula(), le(X, Z))
    assert solver.equivalent(project(p, []).to_formula(), p.to_formula())


def test_project_then_branch(solver):
    # then-branch cube of the decrement loop with difference variables
    dx, dy = Term.var("dx"), Term.var("dy")
    xp, yp = Term.var("x'"), Term.var("y'")
    cube = poly(le(0, X), le(0, Y), eq(xp, X - 1), eq(yp, Y), eq(dx, xp - X), eq(dy, yp - Y))
    q = project(cube, ["x'", "y'", "x", "y"])
    assert solver.equivalent(q.to_formula(), conj(eq(dx, -1), eq(dy, 0)))


def test_poly_join_segment(solver):
    dx, dy = Term.var("dx"), Term.var("dy")
    p = poly(eq(dx, -1), eq(dy, 0))
    q = poly(eq(dx, 0), eq(dy, -1))
    j = poly_join(p, q)
    want = conj(le(-1, dx), le(dx, 0), le(-1, dy), le(dy, 0), eq(dx + dy, -1))
    assert solver.equivalent(j.to_formula(), want)
    assert poly_join(p, Polyhedron.empty()) is p
    assert solver.equivalent(poly_join(p, p).to_formula(), p.to_formula())


def test_convex_hull_two_points(solver):
    h = convex_hull(disj(eq(X, 0), eq(X, 2)), [], solver)
    assert solver.equivalent(h.to_formula(), conj(le(0, X), le(X, 2)))


def test_convex_hull_single_cube(solver):
    psi = conj(le(X, Y), le(Y, Z), le(0, X))
    r = convex_hull_ex(psi, ["y"], solver)
    assert r.iterations == 1
    assert solver.equivalent(r.polyhedron.to_formula(), conj(le(X, Z), le(0, X)))


DECREMENT_BODY = disj(
    conj(le(0, X), le(0, Y), eq("x'", X - 1), eq("y'", Y)),
    conj(le(0, X), le(0, Y), eq("x'", X), eq("y'", Y - 1)))


def test_convex_hull_decrement_deltas(solver):
    dx, dy = Term.var("dx"), Term.var("dy")
    psi = conj(DECREMENT_BODY, eq(dx, Term.var("x'") - X), eq(dy, Term.var("y'") - Y))
    h = convex_hull(psi, ["x", "y", "x'", "y'"], solver)
    want = conj(le(-1, dx), le(dx, 0), le(-1, dy), le(dy, 0), eq(dx + dy, -1))
    assert solver.equivalent(h.to_formula(), want)


def test_implicant_cube(solver):
    a, b, c = le(X, 0), le(Y, 0), le(Z, 0)
    psi = conj(disj(a, b), c)
    cube = implicant_cube(psi, {"x": -1, "y": 5, "z": -3})
    assert set(cube) == {a, c}
    single = conj(a, c)
    assert set(implicant_cube(single, {"x": 0, "y": 0, "z": 0})) == {a, c}
    m = {"x": 3, "y": 2, "x'": 2, "y'": 2}
    cube = implicant_cube(DECREMENT_BODY, m)
    assert solver.entails(conj(cube), DECREMENT_BODY)
    assert evaluate(conj(cube), m)
    assert solver.entails(conj(cube), eq("x'", X - 1))


@pytest.mark.parametrize("seed", range(30))
def test_project_soundness(seed, solver):
    rng = random.Random(700 + seed)
    syms = ["a", "b", "c", "d"]
    atoms = [a for a in rand_cube_atoms(rng, syms) if not isinstance(a, BoolConst)]
    cube = conj(atoms)
    p = Polyhedron.of_atoms(atoms)
    xs = rng.sample(syms, rng.randint(1, 3))
    q = project(p, xs)
    for pt in integer_points(cube, syms):
        assert q.contains(dict(zip(syms, pt)))
    assert solver.entails(cube, q.to_formula())
    keep = [s for s in syms if s not in xs]
    assert not (q.symbols() - set(keep))


def test_budget_fallback(solver):
    # a product of intervals whose elimination needs many pairwise combinations
    syms = [f"v{i}" for i in range(6)]
    atoms = []
    for i, s in enumerate(syms):
        atoms += [le(Term.var(s) + Term.var(syms[(i + 1) % 6]), i + 3),
                  le(-i - 3, Term.var(s) - Term.var(syms[(i + 2) % 6]))]
    p = Polyhedron.of_atoms(atoms)
    with pytest.raises(SizeBudgetExceeded):
        project(p, syms[:4], budget=2, prune=False)
    w = project_or_weaken(p, syms[:4], budget=2)
    assert solver.entails(p.to_formula(), w.to_formula())
    assert not (w.symbols() & set(syms[:4]))


# -- convex hull against vertex enumeration ----------------------------------------

def rand_tu_cube(rng, syms):
    """Box plus at most one two-variable unit constraint: integral vertices."""
    cs = []
    for s in syms:
        lo = rng.randint(-3, 2)
        hi = rng.randint(lo, 3)
        cs.append(({s: 1}, "<=", hi))
        cs.append(({s: -1}, "<=", -lo))
    if len(syms) >= 2 and rng.random() < 0.6:
        s, t = rng.sample(syms, 2)
        cs.append(({s: rng.choice([-1, 1]), t: rng.choice([-1, 1])}, "<=", rng.randint(-2, 3)))
    return cs


def vertices(cs, syms):
    """Exact vertex enumeration of a bounded polyhedron given as (coeffs, op, rhs)."""
    n = len(syms)
    rows = [([Fraction(c.get(s, 0)) for s in syms], Fraction(r), op) for c, op, r in cs]
    out = set()
    for combo in itertools.combinations(range(len(rows)), n):
        a = [rows[i][0] for i in combo]
        if sympy.Matrix(a).rank() < n:
            continue
        v = solve(a, [rows[i][1] for i in combo])
        if v is None:
            continue
        if all(sum(x * y for x, y in zip(row, v)) <= r for row, r, _ in rows):
            out.add(tuple(v))
    return out


def cube_formula(cs):
    return conj(le(linear_term(c), r) for c, _, r in cs)


def hull_vertices(p: Polyhedron, syms):
    cs = []
    for c in p.constraints:
        d = dict(c.coeffs)
        cs.append((d, "<=", c.rhs))
        if c.op == "=":
            cs.append(({s: -v for s, v in d.items()}, "<=", -c.rhs))
    return vertices(cs, syms)


@pytest.mark.parametrize("seed", range(60))
def test_convex_hull_matches_vertex_oracle(seed, solver):
    rng = random.Random(900 + seed)
    syms = ["a", "b", "c"][:rng.randint(1, 3)]
    cubes = [rand_tu_cube(rng, syms) for _ in range(rng.randint(1, 3))]
    psi = disj([cube_formula(c) for c in cubes])
    elim = rng.sample(syms, 1) if len(syms) > 1 and rng.random() < 0.4 else []
    keep = [s for s in syms if s not in elim]
    r = convex_hull_ex(psi, elim, solver)
    p = r.polyhedron
    assert solver.entails(psi, p.to_formula())
    # oracle: projected vertices of every cube
    verts = set()
    for c in cubes:
        for v in vertices(c, syms):
            verts.add(tuple(x for s, x in zip(syms, v) if s in keep))
    if not verts:
        assert p.bottom
        return
    # oracle hull inside p
    for v in verts:
        assert p.contains(dict(zip(keep, v)))
    # p inside oracle hull: every vertex of p is an oracle point
    pv = hull_vertices(p, keep)
    assert pv and pv <= verts
    assert r.iterations <= len(cubes)


def test_join_of_intervals(solver):
    a = poly(le(0, X), le(X, 1))
    b = poly(le(3, X), le(X, 4))
    j = poly_join(a, b)
    assert solver.equivalent(j.to_formula(), conj(le(0, X), le(X, 4)))


def test_constraint_normal_form():
    assert Constraint.make({"x": 2}, "<=", 4) == Constraint.make({"x": 1}, "<=", 2)
    assert Constraint.make({"x": -2}, "=", 4) == Constraint.make({"x": 1}, "=", -2)
