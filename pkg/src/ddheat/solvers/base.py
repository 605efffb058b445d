"""Common machinery of the data-driven block systems.

Both systems are assembled with unit weights: the Lagrange multipliers
absorb the S_g and S_q factors (lambda/S_q, tau/S_g), so the matrix does not
depend on the scaling and one factorization serves every dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..femcore import LinearSystem, factor
from ..femcore.spaces import DofMap, PointSet, Tabulation
from .problem import ProblemSpec


@dataclass(frozen=True, eq=False)
class FieldBlock:
    name: str
    dofmap: DofMap
    offset: int

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.dofmap.n_dofs)


class DDSystem:
    """Assembled, factorized block system plus the Gauss-point machinery
    used by the fixed-point driver."""

    field_names: tuple[str, ...] = ()
    has_temperature_field = True

    def __init__(self, spec: ProblemSpec, points: PointSet, blocks: list[FieldBlock], matrix):
        self.spec = spec
        self.mesh = spec.mesh
        self.points = points
        self.blocks = {b.name: b for b in blocks}
        self.n = sum(b.dofmap.n_dofs for b in blocks)
        fixed, values = [], []
        for b in blocks:
            fixed.append(b.offset + b.dofmap.constrained)
            values.append(b.dofmap.values)
        self.fixed = np.concatenate(fixed).astype(np.int64)
        self.fixed_values = np.concatenate(values)
        self.system = LinearSystem(sp.csr_matrix(matrix), {b.name: b.slice for b in blocks})
        self.fact = factor(self.system.matrix, self.fixed)
        self.factorizations = 1

    # ------------------------------------------------------------------
    @property
    def n_gauss(self) -> int:
        return len(self.points)

    @property
    def solves(self) -> int:
        return self.fact.solves

    def lift(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.fixed] = self.fixed_values
        return x

    def free_dofs(self, name: str) -> np.ndarray:
        b = self.blocks[name]
        return b.offset + b.dofmap.free

    def block(self, x: np.ndarray, name: str) -> np.ndarray:
        return x[self.blocks[name].slice]

    def solve(self, g_star: np.ndarray, q_star: np.ndarray) -> np.ndarray:
        return self.fact.solve(self.rhs(g_star, q_star), self.fixed_values)

    def residual_norm(self, x: np.ndarray, g_star, q_star) -> float:
        b = self.rhs(g_star, q_star)
        r = self.system.matrix @ x - b
        r[self.fixed] = 0.0
        return float(np.linalg.norm(r) / max(np.linalg.norm(b), 1e-300))

    # to be provided by subclasses
    def rhs(self, g_star: np.ndarray, q_star: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def fields(self, x: np.ndarray):
        """(T, g, q) at the Gauss points."""
        raise NotImplementedError

    def evaluate(self, x: np.ndarray, cells, ref):
        """(T, g, q) at arbitrary points given by cell and reference coordinates."""
        raise NotImplementedError


def _vec(tab: Tabulation, x: np.ndarray) -> np.ndarray:
    return np.column_stack([V @ x for V in tab.value])


def vector_mass(a: Tabulation, b: Tabulation, w: np.ndarray) -> sp.csr_matrix:
    W = sp.diags(w)
    return (a.value[0].T @ W @ b.value[0] + a.value[1].T @ W @ b.value[1]).tocsr()


def vector_load(tab: Tabulation, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    return tab.value[0].T @ (w * v[:, 0]) + tab.value[1].T @ (w * v[:, 1])
