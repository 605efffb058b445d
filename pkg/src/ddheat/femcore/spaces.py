"""Global degree-of-freedom maps, point sets and sparse evaluation
matrices for the three space kinds."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from ..mesh import Mesh, Tag
from .basis import (EDGE_VERTICES, REF_VERTICES, ReferenceBasis, SpaceKind, check_order,
                    modal_table, n_poly, reference_basis)
from .quadrature import edge_rule, newton_cotes_lattice, quadrature_rule

BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CellGroup:
    """Cells sharing one reference basis."""

    basis: ReferenceBasis
    cells: np.ndarray
    dofs: np.ndarray      # (m, components * nloc)
    signs: np.ndarray     # (m, nloc)


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: Mesh
    kind: SpaceKind
    orders: np.ndarray
    components: int
    groups: tuple[CellGroup, ...]
    n_dofs: int
    cell_group: np.ndarray
    cell_slot: np.ndarray
    edge_orders: np.ndarray | None = None
    edge_offset: np.ndarray | None = None
    constrained: np.ndarray = np.zeros(0, dtype=np.int64)
    values: np.ndarray = np.zeros(0)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def cell_dofs(self, cell: int) -> np.ndarray:
        return self.groups[self.cell_group[cell]].dofs[self.cell_slot[cell]]

    def edge_dofs(self, edge: int) -> np.ndarray:
        """Global dofs attached to an edge, ordered by degree."""
        if self.edge_offset is None:
            return np.zeros(0, dtype=np.int64)
        return np.arange(self.edge_offset[edge], self.edge_offset[edge + 1])

    def lift(self) -> np.ndarray:
        """Vector holding the prescribed values on constrained dofs."""
        x = np.zeros(self.n_dofs)
        x[self.constrained] = self.values
        return x


def _edge_order_min(mesh: Mesh, orders: np.ndarray) -> np.ndarray:
    ec = mesh.edge_cells
    a = orders[ec[:, 0]]
    b = np.where(ec[:, 1] >= 0, orders[np.maximum(ec[:, 1], 0)], a)
    return np.minimum(a, b)


def build_dofmap(mesh: Mesh, kind: SpaceKind, per_cell_order, components: int = 1) -> DofMap:
    """Number the global dofs. Shared edges of cells with different orders
    carry the trace order of the lower-order cell."""
    orders = np.broadcast_to(np.asarray(per_cell_order, dtype=np.int64), (mesh.n_cells,)).copy()
    for p in np.unique(orders):
        check_order(kind, int(p))
    if components != 1 and kind is not SpaceKind.L2_DISCONTINUOUS:
        raise ValueError("vector components are only supported for L2 spaces")

    if kind is SpaceKind.L2_DISCONTINUOUS:
        nloc = components * np.array([n_poly(int(p)) for p in orders])
        start = np.concatenate([[0], np.cumsum(nloc)])
        sig = orders[:, None]
        edge_orders = edge_offset = None
    else:
        edge_orders = _edge_order_min(mesh, orders)
        if kind is SpaceKind.H1_CONTINUOUS:
            per_edge = np.maximum(edge_orders - 1, 0)
            per_cell = (orders - 1) * (orders - 2) // 2
            base = mesh.n_vertices
        else:
            per_edge = edge_orders + 1
            per_cell = orders * orders - 1
            base = 0
        edge_offset = base + np.concatenate([[0], np.cumsum(per_edge)])
        start = edge_offset[-1] + np.concatenate([[0], np.cumsum(per_cell)])
        sig = np.column_stack([orders, edge_orders[mesh.cell_edges]])

    keys, group_of = np.unique(sig, axis=0, return_inverse=True)
    group_of = group_of.reshape(-1)
    slot = np.zeros(mesh.n_cells, dtype=np.int64)
    groups = []
    for g, key in enumerate(keys):
        cells = np.flatnonzero(group_of == g)
        slot[cells] = np.arange(len(cells))
        order = int(key[0])
        basis = reference_basis(kind, order, None if len(key) == 1 else tuple(int(e) for e in key[1:]))
        m = len(cells)
        if kind is SpaceKind.L2_DISCONTINUOUS:
            dofs = start[cells][:, None] + np.arange(components * basis.size)
        else:
            dofs = np.empty((m, basis.size), dtype=np.int64)
            pos = 0
            if kind is SpaceKind.H1_CONTINUOUS:
                dofs[:, :3] = mesh.cells[cells]
                pos = 3
            for i in range(3):
                e = mesh.cell_edges[cells, i]
                cnt = int(key[1 + i]) - 1 if kind is SpaceKind.H1_CONTINUOUS else int(key[1 + i]) + 1
                dofs[:, pos:pos + cnt] = edge_offset[e][:, None] + np.arange(cnt)
                pos += cnt
            nb = basis.size - pos
            dofs[:, pos:] = start[cells][:, None] + np.arange(nb)
        signs = basis.local_signs(mesh.edge_orientation[cells])
        groups.append(CellGroup(basis, cells, dofs, signs))
    return DofMap(mesh, kind, orders, components, tuple(groups), int(start[-1]), group_of, slot,
                  edge_orders, edge_offset)


def dof_length_scale(dm: DofMap) -> np.ndarray:
    """Length attached to every dof such that a coefficient change of c
    times this length alters the field by roughly c. H(div) coefficients
    are Piola-mapped moments, so edge dofs take the edge length and
    interior dofs the element size; H1 and L2 coefficients are already
    in field units."""
    scale = np.ones(dm.n_dofs)
    if dm.kind is not SpaceKind.HDIV_CONFORMING:
        return scale
    mesh = dm.mesh
    scale[:dm.edge_offset[-1]] = np.repeat(mesh.edge_lengths, np.diff(dm.edge_offset))
    h = mesh.element_sizes()
    for g in dm.groups:
        inner = g.dofs[:, g.dofs.shape[1] - (g.basis.size - sum(e + 1 for e in g.basis.edge_orders)):]
        scale[inner] = h[g.cells][:, None]
    return scale


# ----------------------------------------------------------------------
# point sets
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class PointSet:
    """Points inside cells, grouped contiguously by cell."""

    cells: np.ndarray
    ref: np.ndarray
    xy: np.ndarray
    weights: np.ndarray | None
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)

    def per_cell(self, values: np.ndarray, reduce=np.add) -> np.ndarray:
        return reduce.reduceat(values, self.offsets[:-1], axis=0)


def _point_set(mesh: Mesh, rules) -> PointSet:
    cells, refs, ws = [], [], []
    for c, (pts, w) in enumerate(rules):
        cells.append(np.full(len(pts), c))
        refs.append(pts)
        ws.append(w)
    cells = np.concatenate(cells)
    ref = np.concatenate(refs)
    xy = mesh.to_physical(cells, ref)
    weights = None if ws[0] is None else np.concatenate(ws) * 2.0 * mesh.signed_areas[cells]
    counts = np.bincount(cells, minlength=mesh.n_cells)
    return PointSet(cells, ref, xy, weights, np.concatenate([[0], np.cumsum(counts)]))


def gauss_points(mesh: Mesh, degree) -> PointSet:
    """Quadrature points with physical weights; ``degree`` is a scalar or a
    per-cell array of exactness degrees."""
    degree = np.broadcast_to(np.asarray(degree, dtype=np.int64), (mesh.n_cells,))
    rules = {int(d): quadrature_rule(int(d)) for d in np.unique(degree)}
    return _point_set(mesh, [(rules[int(d)].points, rules[int(d)].weights) for d in degree])


def lattice_points(mesh: Mesh, n_eval: int) -> PointSet:
    lat = newton_cotes_lattice(n_eval)
    return _point_set(mesh, [(lat.points, None)] * mesh.n_cells)


@dataclass(frozen=True, eq=False)
class EdgePoints:
    """Quadrature on a list of edges, seen from one adjacent cell.

    ``s`` runs from the lower to the higher global vertex index."""

    edges: np.ndarray
    cells: np.ndarray
    ref: np.ndarray
    xy: np.ndarray
    weights: np.ndarray     # physical (includes edge length)
    normal: np.ndarray      # outward normal of ``cells``
    s: np.ndarray
    n_per_edge: int


def edge_points(mesh: Mesh, edges, degree: int, side: int = 0) -> EdgePoints:
    edges = np.asarray(edges, dtype=np.int64)
    cells = mesh.edge_cells[edges, side]
    if (cells < 0).any():
        raise ValueError("requested side does not exist for some edges")
    s, w = edge_rule(degree)
    n = len(s)
    local = np.argmax(mesh.cell_edges[cells] == edges[:, None], axis=1)
    orient = mesh.edge_orientation[cells, local]
    ea = np.array([a for a, _ in EDGE_VERTICES])[local]
    eb = np.array([b for _, b in EDGE_VERTICES])[local]
    t = np.where(orient[:, None] > 0, s[None, :], 1.0 - s[None, :])
    ref = REF_VERTICES[ea][:, None, :] + t[..., None] * (REF_VERTICES[eb] - REF_VERTICES[ea])[:, None, :]
    cells_rep = np.repeat(cells, n)
    ref = ref.reshape(-1, 2)
    xy = mesh.to_physical(cells_rep, ref)
    ev = mesh.vertices[mesh.edges[edges]]
    tangent = ev[:, 1] - ev[:, 0]
    length = np.linalg.norm(tangent, axis=1)
    global_normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / length[:, None]
    normal = global_normal * orient[:, None]
    return EdgePoints(np.repeat(edges, n), cells_rep, ref, xy, (w[None, :] * length[:, None]).ravel(),
                      np.repeat(normal, n, axis=0), np.tile(s, len(edges)), n)


# ----------------------------------------------------------------------
# evaluation matrices
# ----------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Tabulation:
    """Sparse (npoints, ndofs) matrices; ``value`` holds one matrix per
    vector component, ``grad`` the two derivatives of a scalar field."""

    value: tuple[sp.csr_matrix, ...]
    grad: tuple[sp.csr_matrix, ...] | None
    div: sp.csr_matrix | None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Values at the points; (n,) for scalars, (n, 2) for vectors."""
        if len(self.value) == 1:
            return self.value[0] @ x
        return np.column_stack([V @ x for V in self.value])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.column_stack([G @ x for G in self.grad])

    def divergence(self, x: np.ndarray) -> np.ndarray:
        return self.div @ x


def tabulate(dm: DofMap, cells, ref) -> Tabulation:
    """Evaluation matrices of all global basis functions at points given
    by cell id and reference coordinates."""
    cells = np.asarray(cells, dtype=np.int64)
    ref = np.asarray(ref, dtype=float).reshape(-1, 2)
    n = len(cells)
    mesh = dm.mesh
    phi, phx, phy = modal_table(ref)
    J = mesh.jacobians[cells]
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    kind = dm.kind
    ncomp = 2 if kind is SpaceKind.HDIV_CONFORMING else dm.components
    acc = {key: ([], [], []) for key in ["v0", "v1", "gx", "gy", "div"]}

    def push(key, rows, cols, vals):
        acc[key][0].append(rows.ravel())
        acc[key][1].append(cols.ravel())
        acc[key][2].append(vals.ravel())

    gid = dm.cell_group[cells]
    for g, grp in enumerate(dm.groups):
        sel = np.flatnonzero(gid == g)
        if len(sel) == 0:
            continue
        b = grp.basis
        slot = dm.cell_slot[cells[sel]]
        D = grp.dofs[slot]
        S = grp.signs[slot]
        rows = np.broadcast_to(sel[:, None], (len(sel), b.size))
        Js, ds = J[sel], det[sel]
        if kind is SpaceKind.HDIV_CONFORMING:
            r0 = (b.coef[:, 0] @ phi[:, sel]).T * S
            r1 = (b.coef[:, 1] @ phi[:, sel]).T * S
            rd = (b.coef[:, 0] @ phx[:, sel] + b.coef[:, 1] @ phy[:, sel]).T * S
            push("v0", rows, D, (Js[:, 0, 0, None] * r0 + Js[:, 0, 1, None] * r1) / ds[:, None])
            push("v1", rows, D, (Js[:, 1, 0, None] * r0 + Js[:, 1, 1, None] * r1) / ds[:, None])
            push("div", rows, D, rd / ds[:, None])
            continue
        val = (b.coef @ phi[:, sel]).T * S
        gx_ref = (b.coef @ phx[:, sel]).T * S
        gy_ref = (b.coef @ phy[:, sel]).T * S
        # inverse transpose of J applied to reference gradients
        gx = (Js[:, 1, 1, None] * gx_ref - Js[:, 1, 0, None] * gy_ref) / ds[:, None]
        gy = (-Js[:, 0, 1, None] * gx_ref + Js[:, 0, 0, None] * gy_ref) / ds[:, None]
        for c in range(dm.components):
            cols = D[:, c * b.size:(c + 1) * b.size]
            push(f"v{c}", rows, cols, val)
            if dm.components == 1:
                push("gx", rows, cols, gx)
                push("gy", rows, cols, gy)

    def build(key):
        r, c, v = acc[key]
        if not r:
            return None
        return sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                             shape=(n, dm.n_dofs))

    value = tuple(build(f"v{c}") for c in range(ncomp))
    grad = (build("gx"), build("gy")) if kind is not SpaceKind.HDIV_CONFORMING and dm.components == 1 else None
    div = build("div") if kind is SpaceKind.HDIV_CONFORMING else None
    return Tabulation(value, grad, div)


def tabulate_points(dm: DofMap, points: PointSet) -> Tabulation:
    return tabulate(dm, points.cells, points.ref)


def weighted_product(A: sp.spmatrix, B: sp.spmatrix, w: np.ndarray) -> sp.csr_matrix:
    """A^T diag(w) B."""
    return (A.T @ sp.diags(w) @ B).tocsr()


# ----------------------------------------------------------------------
# essential boundary conditions
# ----------------------------------------------------------------------
def _boundary_edges(mesh: Mesh, tag: Tag) -> np.ndarray:
    return np.flatnonzero(mesh.edge_tag == int(tag))


def _eval_boundary(fn, xy, normal, segment) -> np.ndarray:
    if fn is None:
        return np.zeros(len(xy))
    return np.broadcast_to(np.asarray(fn(xy, normal), dtype=float), (len(xy),))


def apply_essential(dm: DofMap, boundary: Mapping[int, BoundaryFunction | None] | None = None,
                    homogeneous: bool = False) -> DofMap:
    """Constrain H1 dofs on Dirichlet edges or H(div) normal-trace dofs on
    flux edges. ``boundary`` maps segment ids to functions f(xy, n) with n
    the outward unit normal; missing segments raise, ``homogeneous`` sets
    every prescribed value to zero."""
    mesh = dm.mesh
    boundary = dict(boundary or {})
    if dm.kind is SpaceKind.L2_DISCONTINUOUS:
        raise ValueError("L2 spaces carry no essential constraints")
    tag = Tag.DIRICHLET_T if dm.kind is SpaceKind.H1_CONTINUOUS else Tag.NEUMANN_Q
    edges = _boundary_edges(mesh, tag)
    if len(edges) == 0:
        return replace(dm, constrained=np.zeros(0, dtype=np.int64), values=np.zeros(0))
    seg = mesh.edge_segment[edges]
    if not homogeneous:
        missing = sorted(set(seg.tolist()) - set(boundary))
        if missing:
            raise KeyError(f"no boundary function for segment(s) {missing}")
    eo = dm.edge_orders[edges]
    degree = 2 * int(eo.max()) + 8
    ep = edge_points(mesh, edges, degree)
    npe = ep.n_per_edge
    vals = np.zeros(len(ep.xy))
    if not homogeneous:
        for sid in np.unique(seg):
            rows = np.repeat(seg == sid, npe)
            vals[rows] = _eval_boundary(boundary[sid], ep.xy[rows], ep.normal[rows], sid)
    vals = vals.reshape(len(edges), npe)
    s = ep.s[:npe]
    w = ep.weights.reshape(len(edges), npe)

    dofs, values = [], []
    if dm.kind is SpaceKind.HDIV_CONFORMING:
        # moments against the global normal (sign rho) and Legendre in s
        rho = np.sign(np.einsum("ij,ij->i", ep.normal[::npe], _global_normal(mesh, edges)))
        for j in range(int(eo.max()) + 1):
            pj = legendre.legval(2 * s - 1, np.eye(j + 1)[j])
            has = eo >= j
            m = rho * ((vals * w) @ pj)
            dofs.append(dm.edge_offset[edges[has]] + j)
            values.append(m[has])
    else:
        ev = mesh.edges[edges]
        vert_val = {}
        lo_val = np.empty(len(edges))
        hi_val = np.empty(len(edges))
        for i, sid in enumerate(seg.tolist()):
            for k, v in enumerate(ev[i]):
                if v not in vert_val:
                    p = mesh.vertices[v][None, :]
                    vert_val[v] = 0.0 if homogeneous else float(
                        _eval_boundary(boundary[sid], p, ep.normal[i * npe][None, :], sid)[0])
            lo_val[i] = vert_val[ev[i, 0]]
            hi_val[i] = vert_val[ev[i, 1]]
        dofs.append(np.array(sorted(vert_val), dtype=np.int64))
        values.append(np.array([vert_val[v] for v in sorted(vert_val)]))
        rem = vals - (np.outer(lo_val, 1 - s) + np.outer(hi_val, s))
        for order in np.unique(eo):
            if order < 2:
                continue
            sel = np.flatnonzero(eo == order)
            traces = np.stack([s * (1 - s) * legendre.legval(2 * s - 1, np.eye(d - 1)[d - 2])
                               for d in range(2, order + 1)])
            for i in sel:
                M = (traces * w[i]) @ traces.T
                c = np.linalg.solve(M, traces @ (w[i] * rem[i]))
                dofs.append(dm.edge_offset[edges[i]] + np.arange(order - 1))
                values.append(c)
    dofs = np.concatenate(dofs)
    values = np.concatenate(values)
    order = np.argsort(dofs, kind="stable")
    return replace(dm, constrained=dofs[order], values=values[order])


def _global_normal(mesh: Mesh, edges: np.ndarray) -> np.ndarray:
    ev = mesh.vertices[mesh.edges[edges]]
    t = ev[:, 1] - ev[:, 0]
    return np.column_stack([t[:, 1], -t[:, 0]]) / np.linalg.norm(t, axis=1)[:, None]
