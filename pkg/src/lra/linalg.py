"""Exact rational linear algebra and polynomials in the loop counter."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

Matrix = list[list[Fraction]]


class InconsistentPoints(ValueError):
    pass


def to_matrix(rows) -> Matrix:
    return [[Fraction(x) for x in row] for row in rows]


def rref(m: Sequence[Sequence], ncols: Optional[int] = None) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form and pivot columns.

    Only the first ``ncols`` columns are used for pivoting (defaults to all),
    so an augmented ``[A | b]`` can be reduced without pivoting on ``b``.
    """
    r = to_matrix(m)
    if not r:
        return [], []
    width = len(r[0])
    ncols = width if ncols is None else ncols
    pivots: list[int] = []
    row = 0
    for col in range(ncols):
        pick = next((i for i in range(row, len(r)) if r[i][col] != 0), None)
        if pick is None:
            continue
        r[row], r[pick] = r[pick], r[row]
        p = r[row][col]
        r[row] = [x / p for x in r[row]]
        for i in range(len(r)):
            if i != row and r[i][col] != 0:
                f = r[i][col]
                r[i] = [a - f * b for a, b in zip(r[i], r[row])]
        pivots.append(col)
        row += 1
        if row == len(r):
            break
    return r, pivots


def nullspace(m: Sequence[Sequence], ncols: int) -> list[list[Fraction]]:
    """Basis of ``{x : m x = 0}`` for an ``? x ncols`` matrix."""
    if not m:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    r, pivots = rref(m)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, p in enumerate(pivots):
            v[p] = -r[i][f]
        basis.append(v)
    return basis


def solve(a: Sequence[Sequence], b: Sequence) -> Optional[list[Fraction]]:
    """One solution of ``a x = b`` (free variables set to 0), or None."""
    if not a:
        return None
    n = len(a[0])
    aug = [list(row) + [bi] for row, bi in zip(a, b)]
    r, pivots = rref(aug, n)
    for i in range(len(pivots), len(r)):
        if r[i][n] != 0:
            return None
    x = [Fraction(0)] * n
    for i, p in enumerate(pivots):
        x[p] = r[i][n]
    return x


def rank(m: Sequence[Sequence]) -> int:
    return len(rref(m)[1]) if m else 0


def solve_lambda_system(a: Sequence[Sequence], b: Sequence, i: int, iv_indices,
                        n: int) -> Optional[tuple[list[Fraction], Fraction]]:
    """Find an implied equation ``c.x = d`` of ``a x = b`` with the pattern of a
    stratified recurrence for variable ``i``.

    Columns are ``[x_1..x_n, x_1'..x_n']``.  The pattern is ``c_i = 1``,
    ``c_{i+n} = -1``, every other primed coefficient 0, and unprimed
    coefficients zero outside ``iv_indices``.  Solves ``lambda a = c``,
    ``lambda b = d`` restricted to the constrained columns.
    """
    if not a:
        return None
    rows = len(a)
    ivs = set(iv_indices) - {i}
    constrained = [j for j in range(2 * n) if j not in ivs]
    target = []
    for j in constrained:
        target.append(1 if j == i else -1 if j == i + n else 0)
    # unknown lambda (length rows): sum_r lambda_r a[r][j] = target_j
    system = [[Fraction(a[r][j]) for r in range(rows)] for j in constrained]
    lam = solve(system, target)
    if lam is None:
        return None
    c = [sum(lam[r] * Fraction(a[r][j]) for r in range(rows)) for j in range(2 * n)]
    d = sum(lam[r] * Fraction(b[r]) for r in range(rows))
    return c, d


@dataclass(frozen=True)
class PolyInK:
    """Univariate polynomial ``c0 + c1 k + ... + cd k^d`` with exact coefficients."""

    coeffs: tuple

    def __init__(self, *coeffs):
        if len(coeffs) == 1 and isinstance(coeffs[0], (list, tuple)):
            coeffs = tuple(coeffs[0])
        cs = [Fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_constant(self) -> bool:
        return len(self.coeffs) <= 1

    def __call__(self, k) -> Fraction:
        out = Fraction(0)
        for c in reversed(self.coeffs):
            out = out * k + c
        return out

    def __add__(self, other: PolyInK) -> PolyInK:
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (Fraction(0),) * (n - len(self.coeffs))
        b = other.coeffs + (Fraction(0),) * (n - len(other.coeffs))
        return PolyInK([x + y for x, y in zip(a, b)])

    def scale(self, c) -> PolyInK:
        return PolyInK([x * Fraction(c) for x in self.coeffs])

    def __neg__(self) -> PolyInK:
        return self.scale(-1)

    def __sub__(self, other: PolyInK) -> PolyInK:
        return self + (-other)

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for d, c in enumerate(self.coeffs):
            if c == 0:
                continue
            mono = "" if d == 0 else "k" if d == 1 else f"k^{d}"
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts)


def fit_polynomial(points: Sequence[tuple], degree: int) -> PolyInK:
    """Exact interpolation through ``points`` by a polynomial of degree <= degree."""
    pts = [(Fraction(k), Fraction(v)) for k, v in points]
    if len({k for k, _ in pts}) < degree + 1:
        raise ValueError("need at least degree+1 distinct sample points")
    a = [[k ** j for j in range(degree + 1)] for k, _ in pts]
    coeffs = solve(a, [v for _, v in pts])
    if coeffs is None:
        raise InconsistentPoints(f"no polynomial of degree <= {degree} fits {points}")
    return PolyInK(coeffs)


def sum_closed_form(p: PolyInK) -> PolyInK:
    """``q`` with ``q(k) = sum_{i=0}^{k-1} p(i)`` for every ``k >= 0``."""
    m = max(p.degree, 0)
    pts = []
    acc = Fraction(0)
    for k in range(m + 2):
        pts.append((k, acc))
        acc += p(k)
    return fit_polynomial(pts, m + 1)
