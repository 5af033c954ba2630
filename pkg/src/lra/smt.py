"""SMT-LIB2 solver sessions over a child process.

Queries never depend on solver completeness for soundness: callers receive
``"unknown"`` (or :class:`SolverTimeout`) and must resolve it conservatively.
"""

from __future__ import annotations

import logging
import math
import os
import select
import shlex
import shutil
import subprocess
import time
from contextlib import contextmanager
from fractions import Fraction
from typing import Iterable, Optional

from .formula import (FALSE, TRUE, Formula, NonLinear, Term, evaluate, gt, negate,
                      smt_symbol, symbols, to_smt)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 10_000
SOLVER_ENV = "LRA_SOLVER"

INF = float("inf")


class SolverError(RuntimeError):
    pass


class SolverTimeout(SolverError):
    pass


class SolverCrash(SolverError):
    pass


class Unsat:
    """Returned by :meth:`Solver.get_model` for unsatisfiable queries."""

    def __bool__(self):
        return False

    def __repr__(self):
        return "Unsat"


UNSAT = Unsat()


class Model(dict):
    """Exact assignment of symbols to rationals."""

    def eval(self, t: Term) -> Fraction:
        return eval_term(self, t)


def eval_term(m: Model, t: Term) -> Fraction:
    return t.evaluate(m)


def default_command() -> list[str]:
    cmd = os.environ.get(SOLVER_ENV)
    if cmd:
        return solver_command(cmd)
    return solver_command(shutil.which("z3") or "z3")


def solver_command(spec: str) -> list[str]:
    parts = shlex.split(spec)
    name = os.path.basename(parts[0])
    if len(parts) == 1:
        if name.startswith("z3"):
            parts += ["-in", "-smt2"]
        elif name.startswith("cvc5"):
            parts += ["--incremental", "--lang=smt2", "--produce-models"]
    return parts


def parse_sexpr(text: str):
    """Parse one s-expression into nested lists of atoms (strings)."""
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c in "()":
            tokens.append(c)
            i += 1
        elif c.isspace():
            i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            tokens.append(text[i:j + 1])
            i = j + 1
        elif c == '"':
            j = text.index('"', i + 1)
            tokens.append(text[i:j + 1])
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append(text[i:j])
            i = j
    pos = 0

    def read():
        nonlocal pos
        t = tokens[pos]
        pos += 1
        if t == "(":
            out = []
            while tokens[pos] != ")":
                out.append(read())
            pos += 1
            return out
        return t

    return read()


def _value(v) -> Fraction:
    if isinstance(v, str):
        return Fraction(v)
    head = v[0]
    if head == "-" and len(v) == 2:
        return -_value(v[1])
    if head == "/":
        return _value(v[1]) / _value(v[2])
    raise SolverError(f"cannot read value {v!r}")


class Solver:
    """One solver process; queries are serialised by the owner.

    Symbols are declared lazily as ``Int`` (``Real`` for names registered via
    :meth:`declare_real`) and re-declared after ``pop`` removes them.
    """

    def __init__(self, command: Optional[list[str] | str] = None,
                 timeout_ms: int = DEFAULT_TIMEOUT_MS):
        if isinstance(command, str):
            command = solver_command(command)
        self.command = command or default_command()
        self.timeout_ms = timeout_ms
        self.proc: Optional[subprocess.Popen] = None
        self.queries = 0
        self._start()

    # process management -----------------------------------------------------
    def _start(self):
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1)
        except OSError as exc:
            raise SolverCrash(f"cannot start solver {self.command}: {exc}") from exc
        self._buf = ""
        self.scopes: list[set[str]] = [set()]
        self.declared: set[str] = set()
        self.real_syms: set[str] = set()
        self.functions: set[str] = set()
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        self._send("(set-logic ALL)")
        self._current_timeout = None

    def restart(self):
        self.close()
        self._start()

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.write("(exit)\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, ValueError, OSError):
                pass
            try:
                self.proc.kill()
                self.proc.wait(timeout=1)
            except Exception:
                pass
            self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _send(self, cmd: str):
        try:
            self.proc.stdin.write(cmd + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SolverCrash(str(exc)) from exc

    def _read_response(self, deadline: float) -> str:
        """Read one complete response (an atom line or a balanced s-expr)."""
        fd = self.proc.stdout.fileno()
        while True:
            resp = self._take_response()
            if resp is not None:
                return resp
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise SolverTimeout("solver did not answer in time")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536).decode()
            if not chunk:
                raise SolverCrash("solver process exited")
            self._buf += chunk

    def _take_response(self) -> Optional[str]:
        s = self._buf.lstrip()
        if not s:
            return None
        if s[0] != "(":
            nl = s.find("\n")
            if nl < 0:
                return None
            self._buf = s[nl + 1:]
            return s[:nl].strip()
        depth = 0
        in_bar = False
        for i, c in enumerate(s):
            if c == "|":
                in_bar = not in_bar
            elif in_bar:
                continue
            elif c == "(":
                depth += 1
            elif c == ")":
                depth -= 1
                if depth == 0:
                    self._buf = s[i + 1:]
                    return s[:i + 1]
        return None

    def _query(self, cmd: str, timeout_ms: Optional[int] = None) -> str:
        timeout_ms = self.timeout_ms if timeout_ms is None else timeout_ms
        if timeout_ms != self._current_timeout:
            self._send(f"(set-option :timeout {int(timeout_ms)})")
            self._current_timeout = timeout_ms
        self._send(cmd)
        deadline = time.monotonic() + timeout_ms / 1000 + 5
        try:
            resp = self._read_response(deadline)
        except SolverTimeout:
            log.warning("solver wall-clock timeout; restarting")
            self.restart()
            raise
        except SolverCrash:
            self.restart()
            raise
        if resp.startswith("(error"):
            raise SolverError(resp)
        return resp

    # declarations and scopes ---------------------------------------------
    def declare_real(self, names: Iterable[str]):
        self.real_syms.update(names)

    def _declare(self, syms: Iterable[str]):
        for s in sorted(set(syms) - self.declared):
            sort = "Real" if s in self.real_syms else "Int"
            self._send(f"(declare-const {smt_symbol(s)} {sort})")
            self.declared.add(s)
            self.scopes[-1].add(s)

    def declare(self, syms: Iterable[str]):
        self._declare(syms)

    def declare_function(self, name: str, arity: int):
        if name not in self.functions:
            self._send(f"(declare-fun {smt_symbol(name)} ({' '.join(['Int'] * arity)}) Int)")
            self.functions.add(name)
            self.scopes[0].add("@fun:" + name)

    def push(self):
        self._send("(push 1)")
        self.scopes.append(set())

    def pop(self):
        self._send("(pop 1)")
        dropped = self.scopes.pop()
        self.declared -= dropped
        self.functions -= {d[5:] for d in dropped if d.startswith("@fun:")}

    @contextmanager
    def scope(self):
        depth = len(self.scopes)
        self.push()
        try:
            yield self
        finally:
            # a restart during the scope already discarded it
            if len(self.scopes) > depth:
                self.pop()

    def add(self, f: Formula | str):
        if isinstance(f, str):
            self._send(f"(assert {f})")
            return
        self._declare(symbols(f))
        self._send(f"(assert {to_smt(f)})")

    def check(self, *assumptions: Formula, timeout_ms: Optional[int] = None) -> str:
        """Return ``sat``, ``unsat`` or ``unknown``; timeouts yield ``unknown``."""
        self.queries += 1
        if assumptions:
            with self.scope():
                for a in assumptions:
                    self.add(a)
                return self._check(timeout_ms)
        return self._check(timeout_ms)

    def _check(self, timeout_ms) -> str:
        try:
            resp = self._query("(check-sat)", timeout_ms)
        except SolverTimeout:
            return "unknown"
        if resp not in ("sat", "unsat", "unknown"):
            raise SolverError(f"unexpected response {resp!r}")
        return resp

    def values(self, syms: Iterable[str]) -> Model:
        syms = sorted(set(syms))
        if not syms:
            return Model()
        self._declare(syms)
        resp = self._query("(get-value (" + " ".join(smt_symbol(s) for s in syms) + "))")
        out = Model()
        for name, v in parse_sexpr(resp):
            out[name.strip("|")] = _value(v)
        return out

    # high level operations ---------------------------------------------------
    def get_model(self, phi: Formula, syms: Optional[Iterable[str]] = None,
                  timeout_ms: Optional[int] = None) -> Model | Unsat:
        """A model of ``phi`` over its free symbols (plus ``syms``)."""
        wanted = symbols(phi) | set(syms or ())
        with self.scope():
            self.add(phi)
            r = self._check(timeout_ms)
            if r == "unsat":
                return UNSAT
            if r == "unknown":
                raise SolverTimeout("satisfiability unknown")
            return self.values(wanted)

    def is_sat(self, phi: Formula, timeout_ms: Optional[int] = None) -> str:
        if phi == FALSE:
            return "unsat"
        if phi == TRUE:
            return "sat"
        with self.scope():
            self.add(phi)
            return self._check(timeout_ms)

    def entails(self, phi: Formula, psi: Formula, exists: Iterable[str] = (),
                timeout_ms: Optional[int] = None) -> bool:
        """True iff ``phi => (exists exists. psi)`` is valid; unknown gives False."""
        if psi == TRUE or phi == FALSE:
            return True
        exists = sorted(set(exists) & symbols(psi))
        with self.scope():
            self.add(phi)
            if exists:
                self._declare(symbols(psi) - set(exists))
                binders = " ".join(f"({smt_symbol(s)} Int)" for s in exists)
                self.add(f"(not (exists ({binders}) {to_smt(psi)}))")
            else:
                self.add(negate(psi))
            return self._check(timeout_ms) == "unsat"

    def equivalent(self, phi: Formula, psi: Formula, **kw) -> bool:
        return self.entails(phi, psi, **kw) and self.entails(psi, phi, **kw)

    def optimize_bounds(self, phi: Formula, t: Term, budget: int = 64,
                        timeout_ms: Optional[int] = None) -> tuple:
        """Sound interval ``[lo, hi]`` for integer-valued linear ``t`` under ``phi``.

        Each side is found by galloping then bisecting between a value
        attained by some model and a bound certified by an ``unsat`` answer.
        Unbounded (or budget-exhausted) sides are reported as infinite.
        """
        with self.scope():
            self.add(phi)
            r = self._check(timeout_ms)
            if r == "unsat":
                return (INF, -INF)
            if r != "sat":
                return (-INF, INF)
            start = t.evaluate(self.values(t.symbols()))
            hi = self._bound(t, start, budget, timeout_ms)
            lo = self._bound(-t, -start, budget, timeout_ms)
            return (-lo if lo != INF else -INF, hi)

    def _bound(self, t: Term, attained: Fraction, budget: int, timeout_ms) -> Fraction | float:
        """Least certified upper bound of ``t``, given one attained value."""
        best = math.floor(attained)
        certified = None
        step = 1
        for _ in range(budget):
            if certified is not None and certified <= best:
                return Fraction(certified)
            probe = best + step if certified is None else (best + certified) // 2
            with self.scope():
                self.add(gt(t, probe))
                r = self._check(timeout_ms)
                if r == "sat":
                    v = t.evaluate(self.values(t.symbols()))
            if r == "unsat":
                certified = probe
            elif r == "sat":
                best = max(best, math.floor(v))
                step *= 2
            else:
                return INF if certified is None else Fraction(certified)
        return INF if certified is None else Fraction(certified)

    def check_model(self, phi: Formula, m: Model) -> bool:
        return evaluate(phi, m)


def uf_name(op: str) -> str:
    return f"{op}#uf"


def uninterpret(t: Term) -> str:
    """SMT text for ``t`` with non-linear operations as uninterpreted functions."""
    parts = []
    for b, c in t.coeffs.items():
        if isinstance(b, NonLinear):
            s = f"({smt_symbol(uf_name(b.op))} {uninterpret(b.left)} {uninterpret(b.right)})"
        else:
            s = smt_symbol(b)
        parts.append(s if c == 1 else f"(* {Term.constant(c).smt()} {s})")
    if t.const != 0 or not parts:
        parts.append(Term.constant(t.const).smt())
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"

