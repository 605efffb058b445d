"""Classical H1 Galerkin solvers, linear and Newton-Raphson."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..femcore import (SpaceKind, apply_essential, build_dofmap, edge_points, factor, gauss_points,
                       tabulate, tabulate_points)
from ..femcore.spaces import DofMap, PointSet, Tabulation
from ..mesh import Tag
from .problem import Formulation, ProblemError, ProblemSpec


class NewtonError(RuntimeError):
    def __init__(self, message: str, history=()):
        super().__init__(message)
        self.history = list(history)


@dataclass(eq=False)
class ReferenceSolution:
    spec: ProblemSpec
    dofmap: DofMap
    x: np.ndarray
    points: PointSet
    tab: Tabulation
    history: list[float] = field(default_factory=list)

    @property
    def newton_steps(self) -> int:
        return max(len(self.history) - 1, 0)

    def conductivity(self, T: np.ndarray) -> np.ndarray:
        if self.spec.k_coeffs is None or self.spec.formulation is Formulation.REFERENCE_LINEAR:
            return np.full_like(T, self.spec.k)
        c0, c1, c2 = self.spec.k_coeffs
        return c0 + c1 * T + c2 * T * T

    def gauss_states(self):
        T = self.tab(self.x)
        g = self.tab.gradient(self.x)
        return T, g, -self.conductivity(T)[:, None] * g

    def evaluate(self, cells, ref):
        tab = tabulate(self.dofmap, cells, ref)
        T = tab(self.x)
        g = tab.gradient(self.x)
        return T, g, -self.conductivity(T)[:, None] * g


class HeatProblem:
    """Discrete residual and tangent of -div(k(T) grad T) = f."""

    def __init__(self, spec: ProblemSpec):
        if spec.formulation not in (Formulation.REFERENCE_LINEAR, Formulation.REFERENCE_NONLINEAR):
            raise ProblemError("reference solvers need a REFERENCE_* formulation")
        self.spec = spec
        mesh = spec.mesh
        orders = spec.orders
        dm = build_dofmap(mesh, SpaceKind.H1_CONTINUOUS, orders)
        self.dofmap = apply_essential(dm, spec.dirichlet)
        self.points = gauss_points(mesh, 2 * orders + 2)
        self.tab = tabulate_points(self.dofmap, self.points)
        w = self.points.weights
        self.load = self.tab.value[0].T @ (w * spec.f(self.points.xy))
        flux_edges = np.flatnonzero(mesh.edge_tag == int(Tag.NEUMANN_Q))
        if len(flux_edges):
            ep = edge_points(mesh, flux_edges, 2 * int(orders.max()) + 4)
            qb = spec.boundary_values(spec.flux, mesh.edge_segment[ep.edges], ep.xy, ep.normal)
            E = tabulate(self.dofmap, ep.cells, ep.ref).value[0]
            self.load = self.load - E.T @ (ep.weights * qb)
        self.free = self.dofmap.free
        if spec.formulation is Formulation.REFERENCE_LINEAR:
            self.coeffs = (spec.k, 0.0, 0.0)
        else:
            self.coeffs = tuple(spec.k_coeffs)

    def k(self, T):
        c0, c1, c2 = self.coeffs
        return c0 + c1 * T + c2 * T * T

    def dk(self, T):
        _, c1, c2 = self.coeffs
        return c1 + 2 * c2 * T

    def residual(self, x: np.ndarray) -> np.ndarray:
        tab, w = self.tab, self.points.weights
        T = tab(x)
        kT = self.k(T)
        if (kT <= 0).any():
            raise NewtonError(f"non-positive conductivity {kT.min():.4g} at T = {T[np.argmin(kT)]:.4g}")
        gx, gy = tab.grad[0] @ x, tab.grad[1] @ x
        return tab.grad[0].T @ (w * kT * gx) + tab.grad[1].T @ (w * kT * gy) - self.load

    def tangent(self, x: np.ndarray) -> sp.csr_matrix:
        tab, w = self.tab, self.points.weights
        T = tab(x)
        kT, dkT = self.k(T), self.dk(T)
        Gx, Gy = tab.grad
        E = tab.value[0]
        gx, gy = Gx @ x, Gy @ x
        K = Gx.T @ sp.diags(w * kT) @ Gx + Gy.T @ sp.diags(w * kT) @ Gy
        K = K + (Gx.T @ sp.diags(w * dkT * gx) + Gy.T @ sp.diags(w * dkT * gy)) @ E
        return K.tocsr()

    def initial(self) -> np.ndarray:
        return self.dofmap.lift()


def solve_reference_linear(spec: ProblemSpec) -> ReferenceSolution:
    """Standard Galerkin solve of -div(k grad T) = f with constant k."""
    prob = HeatProblem(spec)
    x0 = prob.initial()
    K = prob.tangent(x0)
    fact = factor(K, prob.dofmap.constrained)
    x = fact.solve(prob.load, prob.dofmap.values)
    return ReferenceSolution(spec, prob.dofmap, x, prob.points, prob.tab)


def solve_reference_nonlinear(spec: ProblemSpec, tol: float = 1e-10, max_iter: int = 50) -> ReferenceSolution:
    """Newton-Raphson with the consistent tangent. Converged when the
    free-dof residual norm drops below ``tol`` times its initial value."""
    prob = HeatProblem(spec)
    x = prob.initial()
    free, fixed = prob.free, prob.dofmap.constrained
    history: list[float] = []
    r0 = None
    for it in range(max_iter + 1):
        R = prob.residual(x)
        r = float(np.linalg.norm(R[free]))
        history.append(r)
        if r0 is None:
            r0 = r
        if r <= tol * r0 or r == 0.0:
            return ReferenceSolution(spec, prob.dofmap, x, prob.points, prob.tab, history)
        if it == max_iter:
            break
        fact = factor(prob.tangent(x), fixed)
        rhs = np.zeros(len(x))
        rhs[free] = -R[free]
        x = x + fact.solve(rhs)
    raise NewtonError(f"Newton did not converge in {max_iter} iterations "
                      f"(relative residual {history[-1] / r0:.3e})", history)
