"""Conservative mixed data-driven system: discontinuous T and g,
H(div)-conforming q, multipliers lambda (conservation) and tau (g = grad T)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..femcore import (SpaceKind, apply_essential, build_dofmap, edge_points, gauss_points, tabulate,
                       tabulate_points)
from ..mesh import Tag
from .base import DDSystem, FieldBlock, _vec, vector_load, vector_mass
from .problem import Formulation, ProblemError, ProblemSpec


def gauss_degree_weaker(orders: np.ndarray) -> np.ndarray:
    return 2 * (orders + 1) + 2


class WeakerSystem(DDSystem):
    field_names = ("T", "g", "q", "lambda", "tau")

    def __init__(self, spec: ProblemSpec):
        if spec.formulation is not Formulation.DD_WEAKER:
            raise ProblemError("WeakerSystem needs a DD_WEAKER problem")
        mesh = spec.mesh
        p = spec.orders
        dm_T = build_dofmap(mesh, SpaceKind.L2_DISCONTINUOUS, p)
        dm_g = build_dofmap(mesh, SpaceKind.L2_DISCONTINUOUS, p + 1, components=2)
        dm_flux = build_dofmap(mesh, SpaceKind.HDIV_CONFORMING, p + 1)
        dm_q = apply_essential(dm_flux, spec.flux)
        dm_tau = apply_essential(dm_flux, homogeneous=True)
        dm_lam = dm_T
        blocks, off = [], 0
        for name, dm in (("T", dm_T), ("g", dm_g), ("q", dm_q), ("lambda", dm_lam), ("tau", dm_tau)):
            blocks.append(FieldBlock(name, dm, off))
            off += dm.n_dofs

        points = gauss_points(mesh, gauss_degree_weaker(p))
        w = points.weights
        self.tab_T = tabulate_points(dm_T, points)
        self.tab_g = tabulate_points(dm_g, points)
        self.tab_q = tabulate_points(dm_q, points)
        W = sp.diags(w)
        E_T = self.tab_T.value[0]
        Mg = vector_mass(self.tab_g, self.tab_g, w)
        Mq = vector_mass(self.tab_q, self.tab_q, w)
        B = (E_T.T @ W @ self.tab_q.div).tocsr()          # lambda x q, also T x tau
        C = vector_mass(self.tab_g, self.tab_q, w)         # g x tau
        A = sp.bmat([
            [None, None, None, None, B],
            [None, Mg, None, None, C],
            [None, None, Mq, B.T, None],
            [None, None, B, None, None],
            [B.T, C.T, None, None, None],
        ], format="csr")
        # keep the empty diagonal blocks explicit in the shape
        A.resize((off, off))

        # scaling-independent part of the right-hand side
        self._b0 = np.zeros(off)
        sl = {b.name: b.slice for b in blocks}
        self._b0[sl["lambda"]] = E_T.T @ (w * spec.f(points.xy))
        dir_edges = np.flatnonzero(mesh.edge_tag == int(Tag.DIRICHLET_T))
        if len(dir_edges):
            ep = edge_points(mesh, dir_edges, 2 * int(p.max()) + 6)
            tb = spec.boundary_values(spec.dirichlet, mesh.edge_segment[ep.edges], ep.xy, ep.normal)
            tt = tabulate(dm_tau, ep.cells, ep.ref)
            self._b0[sl["tau"]] = vector_load(tt, ep.weights, ep.normal * tb[:, None])
        super().__init__(spec, points, blocks, A)

    def rhs(self, g_star: np.ndarray, q_star: np.ndarray) -> np.ndarray:
        b = self._b0.copy()
        w = self.points.weights
        b[self.blocks["g"].slice] = vector_load(self.tab_g, w, g_star)
        b[self.blocks["q"].slice] = vector_load(self.tab_q, w, q_star)
        return b

    def fields(self, x: np.ndarray):
        return (self.tab_T(self.block(x, "T")), _vec(self.tab_g, self.block(x, "g")),
                _vec(self.tab_q, self.block(x, "q")))

    def divergence(self, x: np.ndarray) -> np.ndarray:
        return self.tab_q.div @ self.block(x, "q")

    def evaluate(self, x: np.ndarray, cells, ref):
        b = self.blocks
        tT = tabulate(b["T"].dofmap, cells, ref)
        tg = tabulate(b["g"].dofmap, cells, ref)
        tq = tabulate(b["q"].dofmap, cells, ref)
        return tT(self.block(x, "T")), tg(self.block(x, "g")), tq(self.block(x, "q"))

    def evaluate_full(self, x: np.ndarray, cells, ref):
        """T, grad T (broken), g, q and div q at arbitrary points."""
        b = self.blocks
        tT = tabulate(b["T"].dofmap, cells, ref)
        tg = tabulate(b["g"].dofmap, cells, ref)
        tq = tabulate(b["q"].dofmap, cells, ref)
        xT, xg, xq = self.block(x, "T"), self.block(x, "g"), self.block(x, "q")
        return {"T": tT(xT), "gradT": tT.gradient(xT), "g": tg(xg), "q": tq(xq), "divq": tq.divergence(xq)}
