"""Path expressions: regular expressions over CFA edges.

Built by state elimination over an automaton augmented with a fresh start
and final vertex, and evaluated by a memoising fold in an interpretation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .lang import CFA, Edge


class UnreachableTarget(ValueError):
    pass


class PathExpr:
    __slots__ = ()

    def __str__(self):
        return render(self)


@dataclass(frozen=True, eq=True)
class _Node(PathExpr):
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((type(self).__name__,) + self._key()))

    def _key(self) -> tuple:
        return ()

    def __hash__(self):
        return self._hash


@dataclass(frozen=True, eq=False)
class Epsilon(_Node):
    def __eq__(self, other):
        return isinstance(other, Epsilon)

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=False)
class Empty(_Node):
    def __eq__(self, other):
        return isinstance(other, Empty)

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=False)
class EdgeExpr(_Node):
    edge: Edge = None

    def _key(self):
        return (self.edge.id, self.edge.src, self.edge.dst)

    def __eq__(self, other):
        return isinstance(other, EdgeExpr) and self.edge == other.edge

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=False)
class Cat(_Node):
    left: PathExpr = None
    right: PathExpr = None

    def _key(self):
        return (hash(self.left), hash(self.right))

    def __eq__(self, other):
        return (self is other or isinstance(other, Cat) and self._hash == other._hash
                and self.left == other.left and self.right == other.right)

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=False)
class Alt(_Node):
    left: PathExpr = None
    right: PathExpr = None

    def _key(self):
        return (hash(self.left), hash(self.right))

    def __eq__(self, other):
        return (self is other or isinstance(other, Alt) and self._hash == other._hash
                and self.left == other.left and self.right == other.right)

    __hash__ = _Node.__hash__


@dataclass(frozen=True, eq=False)
class Star(_Node):
    body: PathExpr = None

    def _key(self):
        return (hash(self.body),)

    def __eq__(self, other):
        return (self is other or isinstance(other, Star) and self._hash == other._hash
                and self.body == other.body)

    __hash__ = _Node.__hash__


EPSILON = Epsilon()
EMPTY = Empty()


def edge(e: Edge) -> PathExpr:
    return EdgeExpr(e)


def cat(*parts: PathExpr) -> PathExpr:
    out = EPSILON
    for p in parts:
        if isinstance(out, Empty) or isinstance(p, Empty):
            return EMPTY
        if isinstance(p, Epsilon):
            continue
        out = p if isinstance(out, Epsilon) else Cat(out, p)
    return out


def alt(a: PathExpr, b: PathExpr) -> PathExpr:
    if isinstance(a, Empty):
        return b
    if isinstance(b, Empty) or a == b:
        return a
    return Alt(a, b)


def star(a: PathExpr) -> PathExpr:
    if isinstance(a, (Empty, Epsilon)):
        return EPSILON
    if isinstance(a, Star):
        return a
    return Star(a)


# -- construction ------------------------------------------------------------------

@dataclass
class PathResult:
    expr: PathExpr
    loop_bodies: dict  # header vertex -> Star body recorded at its elimination


def eliminate(cfa: CFA, target: int) -> PathResult:
    """State elimination for all ``entry -> target`` paths.

    Vertices that are not loop headers go first (in vertex order), then loop
    headers from the innermost outwards, so inner loops end up nested under
    the star of their enclosing loop.
    """
    reach = cfa.reachable()
    if target not in reach:
        raise UnreachableTarget(f"vertex {target} is not reachable from entry")
    coreach = {target}
    changed = True
    while changed:
        changed = False
        for e in cfa.edges:
            if e.dst in coreach and e.src not in coreach and e.src in reach:
                coreach.add(e.src)
                changed = True
    live = reach & coreach
    S, F = "S", "F"
    R: dict[tuple, PathExpr] = {(S, cfa.entry): EPSILON, (target, F): EPSILON}
    for e in cfa.edges:
        if e.src in live and e.dst in live:
            key = (e.src, e.dst)
            R[key] = alt(R.get(key, EMPTY), edge(e))
    headers = [v for v in cfa.loop_headers if v in live]
    order = sorted(v for v in live if v not in cfa.loop_headers)
    order += sorted(headers, key=lambda v: -v)
    bodies = {}
    for v in order:
        loop = R.pop((v, v), EMPTY)
        if v in cfa.loop_headers and not isinstance(loop, Empty):
            bodies[v] = loop
        preds = [(u, p) for (u, w), p in R.items() if w == v]
        succs = [(w, s) for (u, w), s in R.items() if u == v]
        for u, _ in preds:
            del R[(u, v)]
        for w, _ in succs:
            del R[(v, w)]
        mid = star(loop)
        for u, p in preds:
            for w, s in succs:
                R[(u, w)] = alt(R.get((u, w), EMPTY), cat(p, mid, s))
    return PathResult(R.get((S, F), EMPTY), bodies)


def path_expression(cfa: CFA, target: int) -> PathExpr:
    return eliminate(cfa, target).expr


# -- evaluation --------------------------------------------------------------------

@dataclass
class Interpretation:
    edge_sem: Callable[[Edge], Any]
    seq: Callable[[Any, Any], Any]
    choice: Callable[[Any, Any], Any]
    star: Callable[[Any], Any]
    one: Any
    zero: Any = None


def evaluate(pe: PathExpr, interp: Interpretation, memo: Optional[dict] = None) -> Any:
    """Fold ``pe`` through ``interp``; shared subexpressions are computed once.

    Passing the same ``memo`` across calls shares loop summaries between
    path expressions of different targets.
    """
    memo = {} if memo is None else memo

    def go(p: PathExpr):
        if p in memo:
            return memo[p]
        if isinstance(p, Epsilon):
            r = interp.one
        elif isinstance(p, Empty):
            if interp.zero is None:
                raise ValueError("empty path expression has no value in this interpretation")
            r = interp.zero
        elif isinstance(p, EdgeExpr):
            r = interp.edge_sem(p.edge)
        elif isinstance(p, Cat):
            r = interp.seq(go(p.left), go(p.right))
        elif isinstance(p, Alt):
            r = interp.choice(go(p.left), go(p.right))
        elif isinstance(p, Star):
            r = interp.star(go(p.body))
        else:
            raise TypeError(p)
        memo[p] = r
        return r

    return go(pe)


# -- rendering ---------------------------------------------------------------------

_PREC = {Alt: 1, Cat: 2, Star: 3}


def render(p: PathExpr, name: Callable[[int], str] = str, prec: int = 0) -> str:
    """Text form using ``.`` for sequencing, ``+`` for choice and postfix ``*``."""
    if isinstance(p, Epsilon):
        return "eps"
    if isinstance(p, Empty):
        return "empty"
    if isinstance(p, EdgeExpr):
        return f"<{name(p.edge.src)},{name(p.edge.dst)}>"
    mine = _PREC[type(p)]
    if isinstance(p, Cat):
        s = f"{render(p.left, name, 2)}.{render(p.right, name, 2)}"
    elif isinstance(p, Alt):
        s = f"{render(p.left, name, 1)} + {render(p.right, name, 1)}"
    else:
        s = f"{render(p.body, name, 3)}*"
    return f"({s})" if mine < prec else s


def to_regex(p: PathExpr, char: Callable[[Edge], str]) -> str:
    """Python regular expression over one character per edge."""
    if isinstance(p, Epsilon):
        return "(?:)"
    if isinstance(p, Empty):
        return "(?!)"
    if isinstance(p, EdgeExpr):
        return char(p.edge)
    if isinstance(p, Cat):
        return to_regex(p.left, char) + to_regex(p.right, char)
    if isinstance(p, Alt):
        return f"(?:{to_regex(p.left, char)}|{to_regex(p.right, char)})"
    return f"(?:{to_regex(p.body, char)})*"


def edges_of(p: PathExpr) -> set:
    if isinstance(p, EdgeExpr):
        return {p.edge}
    if isinstance(p, (Cat, Alt)):
        return edges_of(p.left) | edges_of(p.right)
    if isinstance(p, Star):
        return edges_of(p.body)
    return set()
