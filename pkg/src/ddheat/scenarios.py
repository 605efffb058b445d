"""Ready-made problems: the exponential hat on the unit square, the
quarter annulus used for synthetic data, and the quarter brick slice."""

from __future__ import annotations

import numpy as np

from .mesh import (BRICK_BORE, BRICK_CUT_X0, BRICK_CUT_Y0, BRICK_FIRST_HOLE, BRICK_OUTER_X,
                   BRICK_OUTER_Y, Mesh, Tag, generate_structured_square)
from .solvers.problem import Formulation, ProblemSpec

# square sides: 0 bottom, 1 right, 2 top, 3 left
EXPHAT_TAGS = {"bottom": Tag.NEUMANN_Q, "right": Tag.DIRICHLET_T,
               "top": Tag.NEUMANN_Q, "left": Tag.DIRICHLET_T}


def hat_temperature(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    return np.exp(-100.0 * (x * x + y * y)) * np.cos(np.pi * x) * np.cos(np.pi * y)


def hat_gradient(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    E = np.exp(-100.0 * (x * x + y * y))
    cx, sx = np.cos(np.pi * x), np.sin(np.pi * x)
    cy, sy = np.cos(np.pi * y), np.sin(np.pi * y)
    gx = E * (-200.0 * x * cx * cy - np.pi * sx * cy)
    gy = E * (-200.0 * y * cx * cy - np.pi * cx * sy)
    return np.column_stack([gx, gy])


def hat_laplacian(xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    r2 = x * x + y * y
    E = np.exp(-100.0 * r2)
    cx, sx = np.cos(np.pi * x), np.sin(np.pi * x)
    cy, sy = np.cos(np.pi * y), np.sin(np.pi * y)
    C = cx * cy
    return E * ((40000.0 * r2 - 400.0 - 2.0 * np.pi ** 2) * C
                + 400.0 * np.pi * (x * sx * cy + y * cx * sy))


class ExpHat:
    """Manufactured solution T = exp(-100 r^2) cos(pi x) cos(pi y) with
    conductivity k, so q = -k grad T and f = -k lap T."""

    def __init__(self, k: float = 1.0):
        self.k = float(k)

    def T(self, xy):
        return hat_temperature(xy)

    def g(self, xy):
        return hat_gradient(xy)

    def q(self, xy):
        return -self.k * hat_gradient(xy)

    def f(self, xy):
        return -self.k * hat_laplacian(xy)

    def mesh(self, n: int, order: int = 1) -> Mesh:
        return generate_structured_square(n, (-0.5, 0.5, -0.5, 0.5), EXPHAT_TAGS, order)

    def problem(self, mesh: Mesh, formulation: Formulation, order=None) -> ProblemSpec:
        T_bar = lambda xy, n: hat_temperature(xy)
        q_bar = lambda xy, n: np.einsum("ij,ij->i", self.q(xy), n)
        segs_T = set(mesh.boundary_segment[mesh.boundary_tag == int(Tag.DIRICHLET_T)].tolist())
        segs_q = set(mesh.boundary_segment[mesh.boundary_tag == int(Tag.NEUMANN_Q)].tolist())
        return ProblemSpec(mesh, formulation, order, source=self.f,
                           dirichlet={s: T_bar for s in segs_T}, flux={s: q_bar for s in segs_q}, k=self.k)


def constant(value: float):
    return lambda xy, n: np.full(len(xy), float(value))


def annulus_problem(mesh: Mesh, T_in: float, T_out: float, formulation=Formulation.REFERENCE_NONLINEAR,
                    order=1, k_coeffs=None, k: float = 1.0) -> ProblemSpec:
    return ProblemSpec(mesh, formulation, order, dirichlet={0: constant(T_in), 1: constant(T_out)},
                       flux={2: None, 3: None}, k=k, k_coeffs=k_coeffs)


def brick_problem(mesh: Mesh, T_in: float = 1000.0, T_out: float = 500.0,
                  formulation=Formulation.DD_WEAKER, order=None) -> ProblemSpec:
    """Bore at T_in, outer edges at T_out, zero flux on cuts and holes."""
    flux = {s: None for s in set(mesh.boundary_segment.tolist())
            if s in (BRICK_CUT_Y0, BRICK_CUT_X0) or s >= BRICK_FIRST_HOLE}
    dirichlet = {BRICK_BORE: constant(T_in), BRICK_OUTER_X: constant(T_out), BRICK_OUTER_Y: constant(T_out)}
    return ProblemSpec(mesh, formulation, order, dirichlet=dirichlet, flux=flux)
