"""A small structured imperative language over unbounded integers.

Grammar::

    program ::= "var" ident ("," ident)* ";" stmt*
    stmt    ::= ident ":=" expr ";" | "havoc" ident ";" | "skip" ";"
              | "assume" "(" bexpr ")" ";" | "assert" "(" bexpr ")" ";"
              | "if" "(" (bexpr | "*") ")" block ["else" block]
              | "while" "(" (bexpr | "*") ")" block
    block   ::= "{" stmt* "}"

``//`` starts a comment.  Division and modulo are Euclidean (the remainder
is never negative), matching SMT-LIB ``div``/``mod``.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .formula import (FALSE, TRUE, DivisionByZero, Formula, Term, conj, disj, euclid_div,
                      euclid_mod, make_atom)


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


class DuplicateVar(ParseError):
    pass


class UndeclaredVar(ParseError):
    pass


# -- AST --------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / %
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


Expr = Union[Num, Var, BinOp, Neg]


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= = != >= >
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BAnd:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class BOr:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class BNot:
    arg: "BoolExpr"


BoolExpr = Union[BoolLit, Cmp, BAnd, BOr, BNot]


@dataclass(frozen=True)
class Assign:
    lhs: str
    rhs: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Havoc:
    lhs: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Assume:
    cond: BoolExpr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Assert:
    cond: BoolExpr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Skip:
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Seq:
    stmts: tuple


@dataclass(frozen=True)
class If:
    cond: Optional[BoolExpr]  # None is the nondeterministic ``*``
    then: Seq
    orelse: Seq
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class While:
    cond: Optional[BoolExpr]
    body: Seq
    line: int = field(default=0, compare=False)


Stmt = Union[Assign, Havoc, Assume, Assert, Skip, Seq, If, While]


@dataclass(frozen=True)
class Program:
    vars: tuple
    body: Seq


# -- lexer / parser ---------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){};,])
""", re.VERBOSE)

KEYWORDS = {"var", "havoc", "assume", "assert", "if", "else", "while", "skip", "true", "false"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind, text = m.lastgroup, m.group()
        if kind != "ws":
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0
        self.vars: list[str] = []

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text) -> Optional[Token]:
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        return t

    def ident(self, declared=True) -> str:
        t = self.tok
        if t.kind != "ident":
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        if declared and t.text not in self.vars:
            raise UndeclaredVar(f"undeclared variable {t.text!r}", t.line, t.col)
        return t.text

    def program(self) -> Program:
        self.expect("var")
        while True:
            t = self.tok
            name = self.ident(declared=False)
            if name in self.vars:
                raise DuplicateVar(f"duplicate variable {name!r}", t.line, t.col)
            self.vars.append(name)
            if not self.accept(","):
                break
        self.expect(";")
        stmts = []
        while self.tok.kind != "eof":
            stmts.append(self.stmt())
        return Program(tuple(self.vars), Seq(tuple(stmts)))

    def block(self) -> Seq:
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                self.error("expected '}'")
            stmts.append(self.stmt())
        return Seq(tuple(stmts))

    def cond_or_star(self):
        self.expect("(")
        if self.accept("*"):
            self.expect(")")
            return None
        c = self.bexpr()
        self.expect(")")
        return c

    def stmt(self) -> Stmt:
        t = self.tok
        line = t.line
        if self.accept("havoc"):
            x = self.ident()
            self.expect(";")
            return Havoc(x, line)
        if self.accept("skip"):
            self.expect(";")
            return Skip(line)
        if t.text in ("assume", "assert") and t.kind == "kw":
            self.i += 1
            self.expect("(")
            c = self.bexpr()
            self.expect(")")
            self.expect(";")
            return (Assume if t.text == "assume" else Assert)(c, line)
        if self.accept("if"):
            c = self.cond_or_star()
            then = self.block()
            orelse = self.block() if self.accept("else") else Seq(())
            return If(c, then, orelse, line)
        if self.accept("while"):
            c = self.cond_or_star()
            return While(c, self.block(), line)
        if t.kind == "ident":
            x = self.ident()
            self.expect(":=")
            e = self.expr()
            self.expect(";")
            return Assign(x, e, line)
        self.error(f"expected statement, found {t.text or 'end of input'!r}")

    # boolean expressions: || < && < ! < comparison
    def bexpr(self):
        left = self.band()
        while self.accept("||"):
            left = BOr(left, self.band())
        return left

    def band(self):
        left = self.bnot()
        while self.accept("&&"):
            left = BAnd(left, self.bnot())
        return left

    def bnot(self):
        if self.accept("!"):
            return BNot(self.bnot())
        if self.accept("true"):
            return BoolLit(True)
        if self.accept("false"):
            return BoolLit(False)
        if self.tok.text == "(":
            # parenthesised boolean or arithmetic; try boolean first
            save = self.i
            self.i += 1
            try:
                b = self.bexpr()
                self.expect(")")
                return b
            except ParseError:
                self.i = save
        left = self.expr()
        t = self.tok
        for op in ("<=", ">=", "==", "!=", "<", ">", "="):
            if self.accept(op):
                return Cmp("=" if op == "==" else op, left, self.expr())
        self.error(f"expected comparison operator, found {t.text or 'end of input'!r}")

    def expr(self):
        left = self.term()
        while True:
            if self.accept("+"):
                left = BinOp("+", left, self.term())
            elif self.accept("-"):
                left = BinOp("-", left, self.term())
            else:
                return left

    def term(self):
        left = self.unary()
        while True:
            for op in ("*", "/", "%"):
                if self.accept(op):
                    left = BinOp(op, left, self.unary())
                    break
            else:
                return left

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(int(t.text))
        if t.kind == "ident":
            return Var(self.ident())
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"expected expression, found {t.text or 'end of input'!r}")


def parse(source: str) -> Program:
    """Parse program text; raises :class:`ParseError` with line/column."""
    return _Parser(source).program()


# -- pretty printing -----------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "%": 2}


def show_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + show_expr(e.arg, 3)
    p = _PREC[e.op]
    s = f"{show_expr(e.left, p)} {e.op} {show_expr(e.right, p + 1)}"
    return f"({s})" if p < prec else s


def show_bexpr(b: BoolExpr, prec: int = 0) -> str:
    if isinstance(b, BoolLit):
        return "true" if b.value else "false"
    if isinstance(b, Cmp):
        op = "==" if b.op == "=" else b.op
        return f"{show_expr(b.left)} {op} {show_expr(b.right)}"
    if isinstance(b, BNot):
        return "!" + show_bexpr(b.arg, 3)
    p = 1 if isinstance(b, BOr) else 2
    op = "||" if isinstance(b, BOr) else "&&"
    s = f"{show_bexpr(b.left, p)} {op} {show_bexpr(b.right, p + 1)}"
    return f"({s})" if p < prec else s


def _show_cond(c) -> str:
    return "*" if c is None else show_bexpr(c)


def show_stmt(s: Stmt, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Assign):
        return [f"{pad}{s.lhs} := {show_expr(s.rhs)};"]
    if isinstance(s, Havoc):
        return [f"{pad}havoc {s.lhs};"]
    if isinstance(s, Skip):
        return [f"{pad}skip;"]
    if isinstance(s, Assume):
        return [f"{pad}assume({show_bexpr(s.cond)});"]
    if isinstance(s, Assert):
        return [f"{pad}assert({show_bexpr(s.cond)});"]
    if isinstance(s, Seq):
        return [line for t in s.stmts for line in show_stmt(t, indent)]
    if isinstance(s, If):
        out = [f"{pad}if ({_show_cond(s.cond)}) {{"] + show_stmt(s.then, indent + 1)
        if s.orelse.stmts:
            out += [f"{pad}}} else {{"] + show_stmt(s.orelse, indent + 1)
        return out + [f"{pad}}}"]
    if isinstance(s, While):
        return ([f"{pad}while ({_show_cond(s.cond)}) {{"] + show_stmt(s.body, indent + 1)
                + [f"{pad}}}"])
    raise TypeError(s)


def pretty(p: Program) -> str:
    return "\n".join([f"var {', '.join(p.vars)};"] + show_stmt(p.body)) + "\n"


# -- conversion to terms / formulas -----------------------------------------------

def expr_to_term(e: Expr, name=lambda x: x) -> Term:
    if isinstance(e, Num):
        return Term.constant(e.value)
    if isinstance(e, Var):
        return Term.var(name(e.name))
    if isinstance(e, Neg):
        return -expr_to_term(e.arg, name)
    a, b = expr_to_term(e.left, name), expr_to_term(e.right, name)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return a.div(b) if e.op == "/" else a.mod(b)


def bexpr_to_formula(b: BoolExpr, name=lambda x: x) -> Formula:
    if isinstance(b, BoolLit):
        return TRUE if b.value else FALSE
    if isinstance(b, Cmp):
        return make_atom(b.op, expr_to_term(b.left, name), expr_to_term(b.right, name))
    if isinstance(b, BAnd):
        return conj(bexpr_to_formula(b.left, name), bexpr_to_formula(b.right, name))
    if isinstance(b, BOr):
        return disj(bexpr_to_formula(b.left, name), bexpr_to_formula(b.right, name))
    return bexpr_to_formula(negate_bexpr(b.arg), name)


_FLIP = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "=": "!=", "!=": "="}


def negate_bexpr(b: BoolExpr) -> BoolExpr:
    """Syntactic negation, pushed down to comparisons."""
    if isinstance(b, BoolLit):
        return BoolLit(not b.value)
    if isinstance(b, Cmp):
        return Cmp(_FLIP[b.op], b.left, b.right)
    if isinstance(b, BAnd):
        return BOr(negate_bexpr(b.left), negate_bexpr(b.right))
    if isinstance(b, BOr):
        return BAnd(negate_bexpr(b.left), negate_bexpr(b.right))
    return b.arg


# -- concrete evaluation -------------------------------------------------------------

def eval_expr(e: Expr, state: dict) -> int:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return state[e.name]
    if isinstance(e, Neg):
        return -eval_expr(e.arg, state)
    a, b = eval_expr(e.left, state), eval_expr(e.right, state)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return euclid_div(a, b) if e.op == "/" else euclid_mod(a, b)


_CMP = {"<": int.__lt__, "<=": int.__le__, ">": int.__gt__, ">=": int.__ge__,
        "=": int.__eq__, "!=": int.__ne__}


def eval_bexpr(b: BoolExpr, state: dict) -> bool:
    if isinstance(b, BoolLit):
        return b.value
    if isinstance(b, Cmp):
        return _CMP[b.op](eval_expr(b.left, state), eval_expr(b.right, state))
    if isinstance(b, BAnd):
        return eval_bexpr(b.left, state) and eval_bexpr(b.right, state)
    if isinstance(b, BOr):
        return eval_bexpr(b.left, state) or eval_bexpr(b.right, state)
    return not eval_bexpr(b.arg, state)


class Blocked(Exception):
    """Execution reached a failing assumption (or a division by zero)."""


class OutOfFuel(Exception):
    pass


@dataclass
class AstRun:
    state: dict
    havocs: list  # values chosen for havoc statements, in order
    violations: list  # (line, state) of failed assertions


def run_ast(p: Program, init: dict, rng: random.Random, fuel: int = 10_000,
            havoc_range: int = 10) -> AstRun:
    """Big-step reference interpreter; nondeterminism resolved by ``rng``."""
    state = dict(init)
    run = AstRun(state, [], [])
    budget = [fuel]

    def tick():
        budget[0] -= 1
        if budget[0] < 0:
            raise OutOfFuel()

    def ex(s):
        tick()
        try:
            if isinstance(s, Assign):
                state[s.lhs] = eval_expr(s.rhs, state)
            elif isinstance(s, Havoc):
                v = rng.randint(-havoc_range, havoc_range)
                run.havocs.append(v)
                state[s.lhs] = v
            elif isinstance(s, Assume):
                if not eval_bexpr(s.cond, state):
                    raise Blocked()
            elif isinstance(s, Assert):
                if not eval_bexpr(s.cond, state):
                    run.violations.append((s.line, dict(state)))
            elif isinstance(s, Seq):
                for t in s.stmts:
                    ex(t)
            elif isinstance(s, If):
                c = rng.random() < 0.5 if s.cond is None else eval_bexpr(s.cond, state)
                ex(s.then if c else s.orelse)
            elif isinstance(s, While):
                while (rng.random() < 0.7) if s.cond is None else eval_bexpr(s.cond, state):
                    tick()
                    ex(s.body)
        except DivisionByZero:
            raise Blocked()

    ex(p.body)
    return run


# -- control flow automaton ------------------------------------------------------------

@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    label: Union[Assign, Assume, Havoc]
    dst: int

    def __str__(self):
        return f"{self.src} -[{label_text(self.label)}]-> {self.dst}"


def label_text(label) -> str:
    if isinstance(label, Assign):
        return f"{label.lhs} := {show_expr(label.rhs)}"
    if isinstance(label, Havoc):
        return f"havoc {label.lhs}"
    return f"[{show_bexpr(label.cond)}]"


@dataclass
class CFA:
    vars: tuple
    num_vertices: int
    entry: int
    exit: int
    edges: list
    assert_points: dict  # vertex -> (BoolExpr, line)
    loop_headers: dict = field(default_factory=dict)  # vertex -> line

    def out_edges(self, v: int) -> list[Edge]:
        return [e for e in self.edges if e.src == v]

    def vertex_name(self, v: int) -> str:
        if v == self.entry:
            return "entry"
        if v == self.exit:
            return "exit"
        return str(v)

    def reachable(self) -> set[int]:
        seen, todo = {self.entry}, [self.entry]
        while todo:
            v = todo.pop()
            for e in self.out_edges(v):
                if e.dst not in seen:
                    seen.add(e.dst)
                    todo.append(e.dst)
        return seen


class _Builder:
    def __init__(self):
        self.n = 1
        self.edges: list[Edge] = []
        self.asserts: dict = {}
        self.headers: dict = {}

    def vertex(self) -> int:
        self.n += 1
        return self.n - 1

    def edge(self, src, label, dst):
        self.edges.append(Edge(len(self.edges), src, label, dst))

    def seq(self, stmts, src, dst=None) -> int:
        """Compile ``stmts`` starting at ``src``; the last one ends at ``dst``."""
        if not stmts:
            if dst is not None and dst != src:
                self.edge(src, Assume(BoolLit(True)), dst)
                return dst
            return src
        for i, s in enumerate(stmts):
            src = self.stmt(s, src, dst if i == len(stmts) - 1 else None)
        return src

    def stmt(self, s, src, dst) -> int:
        if isinstance(s, Seq):
            return self.seq(s.stmts, src, dst)
        if isinstance(s, (Assign, Havoc, Assume)):
            d = self.vertex() if dst is None else dst
            self.edge(src, s, d)
            return d
        if isinstance(s, Skip):
            d = self.vertex() if dst is None else dst
            self.edge(src, Assume(BoolLit(True), s.line), d)
            return d
        if isinstance(s, Assert):
            self.asserts[src] = (s.cond, s.line)
            d = self.vertex() if dst is None else dst
            self.edge(src, Assume(BoolLit(True), s.line), d)
            return d
        if isinstance(s, If):
            pos, neg = _branch_conds(s.cond)
            a = self.vertex()
            self.edge(src, Assume(pos, s.line), a)
            if s.orelse.stmts:
                end = self.seq(s.then.stmts, a, dst)
                b = self.vertex()
                self.edge(src, Assume(neg, s.line), b)
                self.seq(s.orelse.stmts, b, end)
                return end
            end = self.seq(s.then.stmts, a, dst)
            self.edge(src, Assume(neg, s.line), end)
            return end
        if isinstance(s, While):
            pos, neg = _branch_conds(s.cond)
            header = src
            self.headers[header] = s.line
            a = self.vertex()
            self.edge(header, Assume(pos, s.line), a)
            self.seq(s.body.stmts, a, header)
            d = self.vertex() if dst is None else dst
            self.edge(header, Assume(neg, s.line), d)
            return d
        raise TypeError(s)


def _branch_conds(c):
    if c is None:
        return BoolLit(True), BoolLit(True)
    return c, negate_bexpr(c)


def build_cfa(p: Program) -> CFA:
    """Compile a program to a control flow automaton with statement labels."""
    b = _Builder()
    end = b.seq(p.body.stmts, 0)
    if not b.edges:
        end = b.vertex()
        b.edge(0, Assume(BoolLit(True)), end)
    return CFA(p.vars, b.n, 0, end, b.edges, b.asserts, b.headers)
