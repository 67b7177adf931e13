"""Exact integer and rational linear algebra over the character lattice.

Everything here works on plain Python ``int`` and ``fractions.Fraction``;
no floating point enters. Vectors are tuples, matrices are lists of row
lists.
"""

from __future__ import annotations

from fractions import Fraction
from functools import reduce
from math import gcd, lcm
from typing import Sequence

Vector = tuple
Matrix = list


class LatticeError(ValueError):
    """Raised for invalid lattice input (zero directions, empty sets)."""


def as_vector(v: Sequence) -> tuple[int, ...]:
    """Return ``v`` as a tuple of ints, rejecting non-integral entries."""
    out = []
    for x in v:
        if isinstance(x, Fraction):
            if x.denominator != 1:
                raise LatticeError(f"non-integral lattice coordinate {x}")
            x = x.numerator
        if int(x) != x:
            raise LatticeError(f"non-integral lattice coordinate {x}")
        out.append(int(x))
    return tuple(out)


def primitivize(v: Sequence[int]) -> tuple[int, ...]:
    """Divide an integer vector by the gcd of its coordinates.

    >>> primitivize((-3, 6, -9))
    (-1, 2, -3)
    """
    v = as_vector(v)
    g = reduce(gcd, v, 0)
    if g == 0:
        raise LatticeError("not a direction: zero vector")
    return tuple(x // g for x in v)


def is_primitive(v: Sequence[int]) -> bool:
    return reduce(gcd, as_vector(v), 0) == 1


# ---------------------------------------------------------------------------
# Smith normal form


def _identity(n: int) -> Matrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def matmul(A: Matrix, B: Matrix) -> Matrix:
    if not A:
        return []
    inner = len(B)
    cols = len(B[0]) if B else 0
    return [[sum(A[i][k] * B[k][j] for k in range(inner)) for j in range(cols)]
            for i in range(len(A))]


def smith_normal_form(A: Sequence[Sequence[int]]) -> tuple[Matrix, Matrix, Matrix]:
    """Smith normal form by row/column gcd elimination.

    Returns ``(U, D, V)`` with ``U @ A @ V == D``, ``U`` and ``V`` unimodular
    and ``D`` diagonal with ``D[0][0] | D[1][1] | ...`` and nonnegative
    diagonal entries.
    """
    D = [list(as_vector(row)) for row in A]
    m = len(D)
    n = len(D[0]) if m else 0
    U = _identity(m)
    V = _identity(n)

    def swap_rows(i, j):
        D[i], D[j] = D[j], D[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for row in D:
            row[i], row[j] = row[j], row[i]
        for row in V:
            row[i], row[j] = row[j], row[i]

    def add_row(src, dst, k):  # row_dst += k * row_src
        D[dst] = [a + k * b for a, b in zip(D[dst], D[src])]
        U[dst] = [a + k * b for a, b in zip(U[dst], U[src])]

    def add_col(src, dst, k):  # col_dst += k * col_src
        for row in D:
            row[dst] += k * row[src]
        for row in V:
            row[dst] += k * row[src]

    for t in range(min(m, n)):
        # pivot: smallest nonzero |entry| in the trailing block
        while True:
            best = None
            for i in range(t, m):
                for j in range(t, n):
                    if D[i][j] and (best is None or abs(D[i][j]) < abs(D[best[0]][best[1]])):
                        best = (i, j)
            if best is None:
                return U, D, V
            swap_rows(t, best[0])
            swap_cols(t, best[1])
            p = D[t][t]
            done = True
            for i in range(t + 1, m):
                q = D[i][t] // p
                if q:
                    add_row(t, i, -q)
                if D[i][t]:
                    done = False
            for j in range(t + 1, n):
                q = D[t][j] // p
                if q:
                    add_col(t, j, -q)
                if D[t][j]:
                    done = False
            if not done:
                continue
            # divisibility: pivot must divide the whole trailing block
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if D[i][j] % p), None)
            if bad is None:
                break
            add_row(bad[0], t, 1)
        if D[t][t] < 0:
            D[t] = [-x for x in D[t]]
            U[t] = [-x for x in U[t]]
    return U, D, V


def smith_diagonal(A: Sequence[Sequence[int]]) -> list[int]:
    """Nonzero invariant factors of ``A``."""
    _, D, _ = smith_normal_form(A)
    return [D[i][i] for i in range(min(len(D), len(D[0]) if D else 0)) if D[i][i]]


def sublattice_index(generators: Sequence[Sequence[int]]) -> int:
    """Index of the lattice spanned by ``generators`` in its saturation.

    The saturation is the set of lattice points in the real span of the
    generators; the index is the product of the nonzero Smith invariants
    of the generator matrix (generators as rows).
    """
    gens = [as_vector(g) for g in generators]
    if not gens:
        raise LatticeError("empty generator list")
    diag = smith_diagonal(gens)
    if not diag:
        raise LatticeError("generators span the zero lattice")
    out = 1
    for d in diag:
        out *= d
    return out


def integer_det(A: Sequence[Sequence[int]]) -> int:
    """Exact determinant of a square integer matrix (fraction-free Bareiss)."""
    M = [list(as_vector(r)) for r in A]
    n = len(M)
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for i in range(k + 1, n):
                if M[i][k]:
                    M[k], M[i] = M[i], M[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[-1][-1] if n else 1


def kernel_basis(row: Sequence[int]) -> list[tuple[int, ...]]:
    """Integer basis of ``{x in Z^n : row . x = 0}`` via Smith form."""
    _, D, V = smith_normal_form([list(row)])
    n = len(row)
    r = 1 if D[0][0] else 0
    return [tuple(V[i][j] for i in range(n)) for j in range(r, n)]


def parallelepiped_points(rays: Sequence[Sequence[int]]) -> list[tuple[Fraction, ...]]:
    """Lattice points of the half-open parallelepiped spanned by ``rays``.

    ``rays`` must be ``n`` linearly independent vectors in ``Z^n``. The
    points are enumerated as coset representatives of ``Z^n / L`` (``L``
    the row lattice) from the Smith form, then reduced into
    ``{sum c_i r_i : 0 <= c_i < 1}``. Returned as sorted coefficient
    vectors ``c`` (exact fractions); the point itself is ``c @ rays``.
    """
    B = [list(as_vector(r)) for r in rays]
    n = len(B)
    U, D, V = smith_normal_form(B)
    d = [D[i][i] for i in range(n)]
    if any(x == 0 for x in d):
        raise LatticeError("rays are linearly dependent")
    Vinv = inverse(V)
    Binv = inverse(B)
    reps = [()]
    for di in d:
        reps = [r + (k,) for r in reps for k in range(di)]
    out = []
    for k in reps:
        x = [sum(Fraction(k[i]) * Vinv[i][j] for i in range(n)) for j in range(n)]
        coeffs = [sum(x[i] * Binv[i][j] for i in range(n)) for j in range(n)]
        coeffs = [c - (c.numerator // c.denominator) for c in coeffs]
        out.append(tuple(coeffs))
    return sorted(out)


# ---------------------------------------------------------------------------
# exact rational helpers


def to_fractions(M) -> Matrix:
    return [[Fraction(x) for x in row] for row in M]


def rref(M) -> tuple[Matrix, list[int]]:
    """Reduced row echelon form over Q; returns (matrix, pivot columns)."""
    A = to_fractions(M)
    rows = len(A)
    cols = len(A[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        p = next((i for i in range(r, rows) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        for i in range(rows):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return A, pivots


def rank(M) -> int:
    if not M:
        return 0
    return len(rref(M)[1])


def solve(A, b) -> list[Fraction] | None:
    """Solve ``A x = b`` exactly for square nonsingular ``A``; None if singular."""
    n = len(A)
    aug = [list(row) + [bi] for row, bi in zip(to_fractions(A), b)]
    R, piv = rref(aug)
    if piv != list(range(n)):
        return None
    return [R[i][n] for i in range(n)]


def inverse(A) -> Matrix:
    n = len(A)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(to_fractions(A))]
    R, piv = rref(aug)
    if piv[:n] != list(range(n)):
        raise LatticeError("singular matrix")
    return [row[n:] for row in R]


def nullspace(M) -> list[list[Fraction]]:
    """Rational basis of the right null space of ``M``."""
    A = to_fractions(M)
    cols = len(A[0])
    R, piv = rref(A)
    free = [c for c in range(cols) if c not in piv]
    basis = []
    for f in free:
        v = [Fraction(0)] * cols
        v[f] = Fraction(1)
        for i, p in enumerate(piv):
            v[p] = -R[i][f]
        basis.append(v)
    return basis


def clear_denominators(v: Sequence[Fraction]) -> tuple[int, ...]:
    """Smallest positive integer multiple of a rational vector, made primitive."""
    den = reduce(lcm, (Fraction(x).denominator for x in v), 1)
    ints = tuple(int(Fraction(x) * den) for x in v)
    g = reduce(gcd, ints, 0)
    return tuple(x // g for x in ints) if g else ints


def dot(u, v):
    return sum(a * b for a, b in zip(u, v))
