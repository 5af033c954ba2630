"""Compositional loop summarisation and assertion checking by linear
recurrence analysis."""

from .analyzer import AnalysisConfig, AnalysisReport, analyze, run_corpus, simulate
from .formula import TransitionFormula, choice, seq, stable
from .lang import build_cfa, parse
from .recurrence import IterationConfig, star

__all__ = [
    "AnalysisConfig", "AnalysisReport", "IterationConfig", "TransitionFormula",
    "analyze", "build_cfa", "choice", "parse", "run_corpus", "seq", "simulate",
    "stable", "star",
]

__version__ = "0.1.0"
