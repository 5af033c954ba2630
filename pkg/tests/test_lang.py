import random
from collections import Counter

import pytest

from lra.analyzer import Finished, simulate
from lra.lang import (Assign, Assume, BoolLit, DuplicateVar, Havoc, OutOfFuel, ParseError,
                      UndeclaredVar, While, build_cfa, eval_bexpr, eval_expr, label_text, parse,
                      pretty, run_ast)
from lra.lang import Blocked as AstBlocked
from lra.formula import DivisionByZero

from util import DIVISION


def test_parse_division():
    p = parse(DIVISION)
    assert p.vars == ("x", "y", "q", "r", "t")
    outer = p.body.stmts[2]
    assert isinstance(outer, While)
    assert isinstance(outer.body.stmts[1], While)


def test_skip_is_one_true_assume():
    cfa = build_cfa(parse("var x; skip;"))
    assert len(cfa.edges) == 1
    lab = cfa.edges[0].label
    assert isinstance(lab, Assume) and lab.cond == BoolLit(True)


def test_dangling_operator():
    with pytest.raises(ParseError) as exc:
        parse("var x;\nx := x +")
    assert exc.value.line == 2


@pytest.mark.parametrize("src", ["var x; x := 1 +;", "var x x := 1;", "var x; while (x) { }",
                                 "var x; if (x < 1) x := 1;", "var x; x := 1"])
def test_syntax_errors(src):
    with pytest.raises(ParseError):
        parse(src)


def test_duplicate_and_undeclared():
    with pytest.raises(DuplicateVar):
        parse("var x, x; x := 1;")
    with pytest.raises(UndeclaredVar):
        parse("var x; y := 1;")
    with pytest.raises(UndeclaredVar):
        parse("var x; assert(x < z);")


def test_division_cfa_shape():
    cfa = build_cfa(parse(DIVISION))
    # vertices entry=0, v1..v8, exit=9
    got = {(e.src, label_text(e.label), e.dst) for e in cfa.edges}
    want = {
        (0, "r := x", 1), (1, "q := 0", 2), (2, "[r >= y]", 3), (3, "t := y", 4),
        (4, "[t == 0]", 7), (4, "[t != 0]", 5), (5, "r := r - 1", 6), (6, "t := t - 1", 4),
        (7, "q := q + 1", 2), (2, "[r < y]", 8), (8, "[true]", 9),
    }
    assert got == want
    assert cfa.num_vertices == 10
    assert (cfa.entry, cfa.exit) == (0, 9)
    assert set(cfa.assert_points) == {8}
    assert set(cfa.loop_headers) == {2, 4}
    assert cfa.reachable() == set(range(10))


def test_single_assignment():
    cfa = build_cfa(parse("var x; x := 1;"))
    assert cfa.num_vertices == 2 and len(cfa.edges) == 1
    assert isinstance(cfa.edges[0].label, Assign)


def test_nondet_branch_both_paths():
    src = "var x; if (*) { x := 1; } else { x := 2; }"
    cfa = build_cfa(parse(src))
    seen = Counter()
    for seed in range(40):
        out = simulate(cfa, {"x": 0}, 100, random.Random(seed))
        assert isinstance(out, Finished)
        seen[out.state["x"]] += 1
    assert set(seen) == {1, 2}
    # both branches start with an Assume(true) edge and rejoin at the exit
    first = [e for e in cfa.edges if e.src == cfa.entry]
    assert len(first) == 2 and all(e.label.cond == BoolLit(True) for e in first)
    assert sum(1 for e in cfa.edges if e.dst == cfa.exit) == 2


def test_euclidean_division():
    p = parse("var a, b, q, r; q := a / b; r := a % b;")
    for a in range(-7, 8):
        for b in [-3, -2, -1, 1, 2, 3]:
            s = {"a": a, "b": b, "q": 0, "r": 0}
            run = run_ast(p, s, random.Random(0))
            q, r = run.state["q"], run.state["r"]
            assert a == q * b + r and 0 <= r < abs(b)
    with pytest.raises(DivisionByZero):
        eval_expr(parse("var x; x := x / 0;").body.stmts[0].rhs, {"x": 1})


# -- randomized programs ----------------------------------------------------------

VARS = ("x", "y", "z")


def rand_expr(rng, depth=0):
    r = rng.random()
    if depth > 1 or r < 0.3:
        return str(rng.randint(0, 5)) if rng.random() < 0.4 else rng.choice(VARS)
    op = rng.choice(["+", "-", "*", "/", "%", "neg"])
    if op == "neg":
        return f"-({rand_expr(rng, depth + 1)})"
    return f"({rand_expr(rng, depth + 1)} {op} {rand_expr(rng, depth + 1)})"


def rand_cond(rng, depth=0):
    r = rng.random()
    if depth < 1 and r < 0.2:
        return f"({rand_cond(rng, depth + 1)} && {rand_cond(rng, depth + 1)})"
    if depth < 1 and r < 0.35:
        return f"({rand_cond(rng, depth + 1)} || {rand_cond(rng, depth + 1)})"
    if depth < 1 and r < 0.45:
        return f"!({rand_cond(rng, depth + 1)})"
    op = rng.choice(["<", "<=", "==", "!=", ">=", ">"])
    return f"{rand_expr(rng, 1)} {op} {rand_expr(rng, 1)}"


def rand_stmts(rng, depth=0, n=None):
    out = []
    for _ in range(n if n is not None else rng.randint(1, 3)):
        r = rng.random()
        v = rng.choice(VARS)
        if depth < 2 and r < 0.15:
            cond = "*" if rng.random() < 0.3 else rand_cond(rng)
            els = f" else {{ {rand_stmts(rng, depth + 1)} }}" if rng.random() < 0.5 else ""
            out.append(f"if ({cond}) {{ {rand_stmts(rng, depth + 1)} }}{els}")
        elif depth < 2 and r < 0.25:
            # bounded loop: a fresh countdown keeps it terminating
            out.append(f"while ({v} > 0 && {v} < 6) {{ {v} := {v} - 1; {rand_stmts(rng, depth + 1)} }}")
        elif depth < 2 and r < 0.3:
            out.append(f"while (*) {{ {rand_stmts(rng, depth + 1)} }}")
        elif r < 0.4:
            out.append(f"havoc {v};")
        elif r < 0.45:
            out.append(f"assume({rand_cond(rng)});")
        elif r < 0.5:
            out.append(f"assert({rand_cond(rng)});")
        elif r < 0.55:
            out.append("skip;")
        else:
            out.append(f"{v} := {rand_expr(rng)};")
    return " ".join(out)


def rand_program(rng):
    return f"var {', '.join(VARS)}; {rand_stmts(rng, 0, rng.randint(1, 4))}"


@pytest.mark.parametrize("seed", range(60))
def test_pretty_round_trip(seed):
    p = parse(rand_program(random.Random(seed)))
    text = pretty(p)
    assert parse(text) == p
    assert pretty(parse(text)) == text


def cfa_reproduces(cfa, init, havocs, final, max_depth):
    """Breadth-first search for an entry-to-exit CFA path that consumes the
    recorded havoc values in order and ends in ``final``."""
    out = {}
    for e in cfa.edges:
        out.setdefault(e.src, []).append(e)
    key = lambda s: tuple(s[x] for x in cfa.vars)
    frontier = {(cfa.entry, key(init), 0)}
    seen = set(frontier)
    for _ in range(max_depth):
        nxt = set()
        for v, st, h in frontier:
            if v == cfa.exit and h == len(havocs) and st == key(final):
                return True
            s = dict(zip(cfa.vars, st))
            for e in out.get(v, []):
                lab = e.label
                try:
                    if isinstance(lab, Assume):
                        if not eval_bexpr(lab.cond, s):
                            continue
                        t = dict(s)
                        hh = h
                    elif isinstance(lab, Assign):
                        t = dict(s, **{lab.lhs: eval_expr(lab.rhs, s)})
                        hh = h
                    else:
                        if h >= len(havocs):
                            continue
                        t = dict(s, **{lab.lhs: havocs[h]})
                        hh = h + 1
                except DivisionByZero:
                    continue
                item = (e.dst, key(t), hh)
                if item not in seen:
                    seen.add(item)
                    nxt.add(item)
        frontier = nxt
        if not frontier:
            return False
    return any(v == cfa.exit and h == len(havocs) and st == key(final) for v, st, h in frontier)


@pytest.mark.parametrize("seed", range(60))
def test_ast_runs_are_cfa_paths(seed):
    rng = random.Random(seed)
    p = parse(rand_program(rng))
    cfa = build_cfa(p)
    assert not any(isinstance(e.label, While) for e in cfa.edges)
    assert all(isinstance(e.label, (Assign, Assume, Havoc)) for e in cfa.edges)
    checked = 0
    for trial in range(20):
        init = {x: rng.randint(-6, 6) for x in VARS}
        try:
            run = run_ast(p, init, random.Random(seed * 100 + trial), fuel=400)
        except (AstBlocked, OutOfFuel):
            continue
        assert cfa_reproduces(cfa, init, run.havocs, run.state, 2000)
        checked += 1
    if checked == 0:
        pytest.skip("every sampled run blocked")
