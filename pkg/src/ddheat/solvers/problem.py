"""Boundary value problem description shared by all solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

import numpy as np

from ..mesh import Mesh, Tag

BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
Source = Callable[[np.ndarray], np.ndarray]


class Formulation(Enum):
    REFERENCE_LINEAR = "reference_linear"
    REFERENCE_NONLINEAR = "reference_nonlinear"
    DD_STRONGER = "stronger"
    DD_WEAKER = "weaker"


class ProblemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Steady heat conduction -div(k grad T) = f with T = T_bar on Dirichlet
    edges and q.n = q_bar on flux edges (q the heat flux, n outward).

    ``order`` is the temperature order per cell; None takes the mesh's
    cell orders. ``dirichlet`` and ``flux`` map boundary segment ids to
    functions f(xy, n); a flux entry of None means zero flux.
    """

    mesh: Mesh
    formulation: Formulation
    order: int | np.ndarray | None = None
    source: Source | None = None
    dirichlet: Mapping[int, BoundaryFunction] = field(default_factory=dict)
    flux: Mapping[int, BoundaryFunction | None] = field(default_factory=dict)
    k: float = 1.0
    k_coeffs: tuple[float, float, float] | None = None

    def __post_init__(self):
        orders = self.orders
        low = 0 if self.formulation is Formulation.DD_WEAKER else 1
        if orders.min() < low:
            raise ProblemError(f"{self.formulation.value} needs temperature order >= {low}")
        mesh = self.mesh
        for tag, table, name in ((Tag.DIRICHLET_T, self.dirichlet, "dirichlet"),
                                 (Tag.NEUMANN_Q, self.flux, "flux")):
            segs = set(mesh.boundary_segment[mesh.boundary_tag == int(tag)].tolist())
            missing = sorted(segs - set(table))
            if missing:
                raise ProblemError(f"no {name} data for boundary segment(s) {missing}")
        if self.formulation is Formulation.REFERENCE_NONLINEAR and self.k_coeffs is None:
            raise ProblemError("nonlinear reference solve needs k_coeffs")
        if self.k <= 0:
            raise ProblemError("conductivity must be positive")

    @property
    def orders(self) -> np.ndarray:
        if self.order is None:
            return self.mesh.cell_order.copy()
        return np.broadcast_to(np.asarray(self.order, dtype=np.int64), (self.mesh.n_cells,)).copy()

    def f(self, xy: np.ndarray) -> np.ndarray:
        if self.source is None:
            return np.zeros(len(xy))
        return np.broadcast_to(np.asarray(self.source(xy), dtype=float), (len(xy),))

    def boundary_values(self, table, segments, xy, normal) -> np.ndarray:
        out = np.zeros(len(xy))
        for sid in np.unique(segments):
            fn = table[int(sid)]
            if fn is None:
                continue
            sel = segments == sid
            out[sel] = np.broadcast_to(np.asarray(fn(xy[sel], normal[sel]), dtype=float), (int(sel.sum()),))
        return out
