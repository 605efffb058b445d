"""Data-driven system with continuous T, discontinuous q and a continuous
multiplier lambda enforcing the weak conservation law."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..femcore import (SpaceKind, apply_essential, build_dofmap, edge_points, gauss_points, tabulate,
                       tabulate_points)
from ..mesh import Tag
from .base import DDSystem, FieldBlock, _vec, vector_mass
from .problem import Formulation, ProblemError, ProblemSpec


def gauss_degree_stronger(orders: np.ndarray) -> np.ndarray:
    return 2 * orders + 2


class StrongerSystem(DDSystem):
    field_names = ("T", "q", "lambda")

    def __init__(self, spec: ProblemSpec):
        if spec.formulation is not Formulation.DD_STRONGER:
            raise ProblemError("StrongerSystem needs a DD_STRONGER problem")
        mesh = spec.mesh
        p = spec.orders
        dm_h1 = build_dofmap(mesh, SpaceKind.H1_CONTINUOUS, p)
        dm_T = apply_essential(dm_h1, spec.dirichlet)
        dm_lam = apply_essential(dm_h1, homogeneous=True)
        dm_q = build_dofmap(mesh, SpaceKind.L2_DISCONTINUOUS, p - 1, components=2)
        blocks, off = [], 0
        for name, dm in (("T", dm_T), ("q", dm_q), ("lambda", dm_lam)):
            blocks.append(FieldBlock(name, dm, off))
            off += dm.n_dofs

        points = gauss_points(mesh, gauss_degree_stronger(p))
        w = points.weights
        W = sp.diags(w)
        self.tab_T = tabulate_points(dm_T, points)
        self.tab_q = tabulate_points(dm_q, points)
        Gx, Gy = self.tab_T.grad
        K = (Gx.T @ W @ Gx + Gy.T @ W @ Gy).tocsr()
        Mq = vector_mass(self.tab_q, self.tab_q, w)
        G = (Gx.T @ W @ self.tab_q.value[0] + Gy.T @ W @ self.tab_q.value[1]).tocsr()   # lambda x q
        A = sp.bmat([[K, None, None], [None, Mq, G.T], [None, G, None]], format="csr")
        A.resize((off, off))

        self._b0 = np.zeros(off)
        sl = {b.name: b.slice for b in blocks}
        E = self.tab_T.value[0]
        b_lam = -(E.T @ (w * spec.f(points.xy)))
        flux_edges = np.flatnonzero(mesh.edge_tag == int(Tag.NEUMANN_Q))
        if len(flux_edges):
            ep = edge_points(mesh, flux_edges, 2 * int(p.max()) + 4)
            qb = spec.boundary_values(spec.flux, mesh.edge_segment[ep.edges], ep.xy, ep.normal)
            Eb = tabulate(dm_lam, ep.cells, ep.ref).value[0]
            b_lam = b_lam + Eb.T @ (ep.weights * qb)
        self._b0[sl["lambda"]] = b_lam
        super().__init__(spec, points, blocks, A)

    def rhs(self, g_star: np.ndarray, q_star: np.ndarray) -> np.ndarray:
        b = self._b0.copy()
        w = self.points.weights
        Gx, Gy = self.tab_T.grad
        b[self.blocks["T"].slice] = Gx.T @ (w * g_star[:, 0]) + Gy.T @ (w * g_star[:, 1])
        qv = self.tab_q.value
        b[self.blocks["q"].slice] = qv[0].T @ (w * q_star[:, 0]) + qv[1].T @ (w * q_star[:, 1])
        return b

    def fields(self, x: np.ndarray):
        xT = self.block(x, "T")
        return self.tab_T(xT), self.tab_T.gradient(xT), _vec(self.tab_q, self.block(x, "q"))

    def evaluate(self, x: np.ndarray, cells, ref):
        tT = tabulate(self.blocks["T"].dofmap, cells, ref)
        tq = tabulate(self.blocks["q"].dofmap, cells, ref)
        xT = self.block(x, "T")
        return tT(xT), tT.gradient(xT), tq(self.block(x, "q"))

    def evaluate_full(self, x: np.ndarray, cells, ref):
        T, g, q = self.evaluate(x, cells, ref)
        return {"T": T, "gradT": g, "g": g, "q": q, "divq": None}
