"""Exact integer linear algebra on Python-int matrices (lists of lists).

Smith normal form comes from sympy; the row Hermite form with its transform is
done here because the lattice bases downstream need the transform matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

from sympy import Matrix, ZZ
from sympy.matrices.normalforms import smith_normal_decomp

IntMatrix = list[list[int]]


def to_int_matrix(A) -> IntMatrix:
    return [[int(x) for x in row] for row in A]


def shape(A: IntMatrix, ncols: int | None = None) -> tuple[int, int]:
    return len(A), (len(A[0]) if A else (ncols or 0))


def identity(n: int) -> IntMatrix:
    return [[int(i == j) for j in range(n)] for i in range(n)]


def matmul(A: IntMatrix, B: IntMatrix) -> IntMatrix:
    if not A or not B:
        return [[0] * (len(B[0]) if B else 0) for _ in A]
    Bt = list(zip(*B))
    return [[sum(a * b for a, b in zip(row, col)) for col in Bt] for row in A]


def transpose(A: IntMatrix, ncols: int = 0) -> IntMatrix:
    if not A:
        return [[] for _ in range(ncols)]
    return [list(r) for r in zip(*A)]


@dataclass
class SmithForm:
    """U A V = S with U, V unimodular; `diagonal` lists the nonzero invariant factors."""

    S: IntMatrix
    U: IntMatrix
    V: IntMatrix
    diagonal: list[int]

    @property
    def rank(self) -> int:
        return len(self.diagonal)


def smith(A: IntMatrix, nrows: int, ncols: int) -> SmithForm:
    if nrows == 0 or ncols == 0:
        return SmithForm([[0] * ncols for _ in range(nrows)], identity(nrows), identity(ncols), [])
    S, U, V = smith_normal_decomp(Matrix(A), domain=ZZ)
    S_ = to_int_matrix(S.tolist())
    diag = [abs(S_[i][i]) for i in range(min(nrows, ncols)) if S_[i][i] != 0]
    return SmithForm(S_, to_int_matrix(U.tolist()), to_int_matrix(V.tolist()), diag)


def integer_kernel(A: IntMatrix, nrows: int, ncols: int) -> IntMatrix:
    """Rows form a basis of {x in Z^ncols : A x = 0} (a saturated lattice)."""
    sf = smith(A, nrows, ncols)
    r = sf.rank
    return [[sf.V[i][j] for i in range(ncols)] for j in range(r, ncols)]


def hermite_rows(B: IntMatrix, ncols: int) -> tuple[IntMatrix, IntMatrix]:
    """Row Hermite normal form.

    Returns (H, T) with H = T B, H in reduced row echelon form over Z (positive
    pivots, entries above a pivot reduced into [0, pivot)), zero rows dropped.
    This is the lexicographically smallest reduced echelon basis of the row lattice.
    """
    m = len(B)
    H = [list(r) for r in B]
    T = identity(m)
    row = 0
    for col in range(ncols):
        if row >= m:
            break
        while True:
            nz = [i for i in range(row, m) if H[i][col] != 0]
            if not nz:
                break
            piv = min(nz, key=lambda i: abs(H[i][col]))
            H[row], H[piv] = H[piv], H[row]
            T[row], T[piv] = T[piv], T[row]
            done = True
            for i in range(row + 1, m):
                if H[i][col] != 0:
                    q = H[i][col] // H[row][col]
                    H[i] = [a - q * b for a, b in zip(H[i], H[row])]
                    T[i] = [a - q * b for a, b in zip(T[i], T[row])]
                    if H[i][col] != 0:
                        done = False
            if done:
                break
        if row < m and H[row][col] != 0:
            if H[row][col] < 0:
                H[row] = [-a for a in H[row]]
                T[row] = [-a for a in T[row]]
            p = H[row][col]
            for i in range(row):
                q = H[i][col] // p
                if q:
                    H[i] = [a - q * b for a, b in zip(H[i], H[row])]
                    T[i] = [a - q * b for a, b in zip(T[i], T[row])]
            row += 1
    return H[:row], T[:row]


def solve_in_lattice(H: IntMatrix, x: list[int]):
    """Coordinates c (Fractions) with x = c H for a row-echelon basis H, or None."""
    from fractions import Fraction

    c = []
    rem = [Fraction(a) for a in x]
    for r in H:
        piv = next(j for j, a in enumerate(r) if a != 0)
        coef = rem[piv] / r[piv]
        c.append(coef)
        rem = [a - coef * b for a, b in zip(rem, r)]
    if any(a != 0 for a in rem):
        return None
    return c
