"""Sparse direct factorization with elimination of constrained dofs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

PIVOT_TOL = 1e-13


class SingularMatrixError(RuntimeError):
    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Assembled matrix with named contiguous blocks."""

    matrix: sp.csr_matrix
    blocks: dict[str, slice]

    def symmetry_error(self) -> float:
        A = self.matrix
        scale = abs(A).max() or 1.0
        diff = abs(A - A.T)
        return float(diff.max() / scale) if diff.nnz else 0.0


@dataclass(eq=False)
class Factorization:
    lu: object
    n: int
    free: np.ndarray
    fixed: np.ndarray
    coupling: sp.csr_matrix
    solves: int = field(default=0)

    def solve(self, rhs: np.ndarray, fixed_values: np.ndarray | None = None) -> np.ndarray:
        return resolve(self, rhs, fixed_values)


def factor(matrix, fixed: np.ndarray | None = None) -> Factorization:
    """LU with partial pivoting of the rows and columns not in ``fixed``.

    Raises SingularMatrixError naming the (free-numbered) pivot whose
    magnitude falls below PIVOT_TOL relative to the largest pivot.
    """
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    fixed = np.zeros(0, dtype=np.int64) if fixed is None else np.asarray(fixed, dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    Aff = A[free][:, free].tocsc()
    coupling = A[free][:, fixed].tocsr()
    if len(free) == 0:
        return Factorization(None, n, free, fixed, coupling)
    try:
        lu = splu(Aff, permc_spec="COLAMD")
    except RuntimeError:
        # exactly singular: a tiny diagonal shift lets the zero pivot be located
        shift = 1e-3 * PIVOT_TOL * (abs(Aff).max() or 1.0)
        lu = splu((Aff + shift * sp.identity(len(free), format="csc")).tocsc(), permc_spec="COLAMD")
    d = np.abs(lu.U.diagonal())
    k = int(np.argmin(d))
    if d[k] <= PIVOT_TOL * d.max():
        col = int(lu.perm_c[k])
        raise SingularMatrixError(
            f"near-zero pivot {d[k]:.3e} at free dof {int(free[col])}; "
            "check order pairing and boundary conditions", pivot=int(free[col]))
    return Factorization(lu, n, free, fixed, coupling)


def resolve(fact: Factorization, rhs: np.ndarray, fixed_values: np.ndarray | None = None) -> np.ndarray:
    """Full-length solution; constrained entries take ``fixed_values``."""
    rhs = np.asarray(rhs, dtype=float)
    x = np.zeros(fact.n)
    b = rhs[fact.free].copy()
    if len(fact.fixed):
        xc = np.zeros(len(fact.fixed)) if fixed_values is None else np.asarray(fixed_values, dtype=float)
        x[fact.fixed] = xc
        b -= fact.coupling @ xc
    if fact.lu is not None:
        x[fact.free] = fact.lu.solve(b)
    fact.solves += 1
    return x
