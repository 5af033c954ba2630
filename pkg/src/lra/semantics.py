"""Transition-formula semantics of CFA edges and the analysis interpretation."""

from __future__ import annotations

from typing import Optional

from .formula import FALSE, TransitionFormula, choice, conj, eq, identity, prime, seq, stable
from .lang import Assign, Assume, Havoc, bexpr_to_formula, expr_to_term
from .pathexpr import Interpretation
from .recurrence import IterationConfig, star
from .smt import Solver


def edge_semantics(label, vars: tuple) -> TransitionFormula:
    """Assignment, assumption or havoc as a transition formula over ``vars``."""
    vars = tuple(vars)
    if isinstance(label, Assign):
        phi = conj(eq(prime(label.lhs), expr_to_term(label.rhs)),
                   stable(x for x in vars if x != label.lhs))
    elif isinstance(label, Havoc):
        phi = stable(x for x in vars if x != label.lhs)
    elif isinstance(label, Assume):
        phi = conj(bexpr_to_formula(label.cond), stable(vars))
    else:
        raise TypeError(f"not an edge label: {label!r}")
    return TransitionFormula(phi, vars)


def lra_interpretation(vars: tuple, solver: Solver, cfg: Optional[IterationConfig] = None,
                       stars: Optional[list] = None) -> Interpretation:
    """The interpretation whose universe is transition formulas over ``vars``.

    Each star computation appends a report to ``stars`` when given.
    """
    vars = tuple(vars)
    cfg = cfg or IterationConfig()
    return Interpretation(
        edge_sem=lambda e: edge_semantics(e.label, vars),
        seq=seq,
        choice=choice,
        star=lambda body: star(body, cfg, solver, stars),
        one=identity(vars),
        zero=TransitionFormula(FALSE, vars),
    )
