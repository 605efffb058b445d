"""Triangular meshes with tagged boundaries, geometry generators and
conforming longest-edge refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import Delaunay

MESH_HEADER = "ddheat-mesh v1"


class Tag(IntEnum):
    DIRICHLET_T = 0
    NEUMANN_Q = 1


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Circle:
    """Analytic boundary curve used to snap refinement vertices."""

    center: tuple[float, float]
    radius: float

    def project(self, xy: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        d = xy - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return c + self.radius * d / r


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation.

    ``boundary`` lists boundary edges as vertex pairs; each carries a tag
    and a segment id. The segment id doubles as the key under which a
    problem stores its boundary value function, and identifies the
    geometric piece (side, arc, hole) the edge belongs to.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    boundary_tag: np.ndarray
    boundary_segment: np.ndarray
    cell_order: np.ndarray
    generation: np.ndarray
    curves: Mapping[int, Circle] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=np.int64))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tag", np.asarray(self.boundary_tag, dtype=np.int8))
        object.__setattr__(self, "boundary_segment", np.asarray(self.boundary_segment, dtype=np.int64))
        object.__setattr__(self, "cell_order", np.asarray(self.cell_order, dtype=np.int64))
        object.__setattr__(self, "generation", np.asarray(self.generation, dtype=np.int64))
        self.validate()

    # ------------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        v = self.vertices[self.cells]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def _topology(self):
        # local edge i is opposite local vertex i: (v1,v2), (v2,v0), (v0,v1)
        c = self.cells
        local = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        cell_edges = inverse.reshape(-1, 3)
        edge_cells = np.full((len(edges), 2), -1, dtype=np.int64)
        counts = np.zeros(len(edges), dtype=np.int64)
        for slot, e in enumerate(inverse):
            k = counts[e]
            if k >= 2:
                raise MeshError(f"edge {edges[e].tolist()} shared by more than two cells")
            edge_cells[e, k] = slot // 3
            counts[e] += 1
        return edges, cell_edges, edge_cells

    @property
    def edges(self) -> np.ndarray:
        """Unique edges, each stored lower vertex index first."""
        return self._topology[0]

    @property
    def cell_edges(self) -> np.ndarray:
        return self._topology[1]

    @property
    def edge_cells(self) -> np.ndarray:
        """(n_edges, 2) incident cells; second entry is -1 on the boundary."""
        return self._topology[2]

    @cached_property
    def edge_orientation(self) -> np.ndarray:
        """+1 where a cell's local edge runs from lower to higher global index."""
        c = self.cells
        start = np.stack([c[:, 1], c[:, 2], c[:, 0]], axis=1)
        end = np.stack([c[:, 2], c[:, 0], c[:, 1]], axis=1)
        return np.where(start < end, 1, -1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        """Edge id of every row of ``boundary``."""
        lookup = {tuple(e): i for i, e in enumerate(self.edges.tolist())}
        key = np.sort(self.boundary, axis=1)
        try:
            return np.array([lookup[tuple(e)] for e in key.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise MeshError(f"boundary edge {exc.args[0]} is not a mesh edge") from None

    @cached_property
    def edge_tag(self) -> np.ndarray:
        """Per-edge tag; -1 for interior edges."""
        tag = np.full(self.n_edges, -1, dtype=np.int64)
        tag[self.boundary_edge_ids] = self.boundary_tag
        return tag

    @cached_property
    def edge_segment(self) -> np.ndarray:
        seg = np.full(self.n_edges, -1, dtype=np.int64)
        seg[self.boundary_edge_ids] = self.boundary_segment
        return seg

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] >= 0)

    @cached_property
    def jacobians(self) -> np.ndarray:
        """(n_cells, 2, 2) affine map Jacobians; columns v1-v0, v2-v0."""
        v = self.vertices[self.cells]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)

    def element_sizes(self) -> np.ndarray:
        return self.edge_lengths[self.cell_edges].max(axis=1)

    def element_size(self, cell: int) -> float:
        """Representative size of a cell: its longest edge."""
        return float(self.edge_lengths[self.cell_edges[cell]].max())

    def to_reference(self, cells: np.ndarray, xy: np.ndarray) -> np.ndarray:
        """Reference coordinates of physical points inside the given cells."""
        cells = np.asarray(cells)
        J = self.jacobians[cells]
        d = xy - self.vertices[self.cells[cells, 0]]
        return np.linalg.solve(J, d[..., None])[..., 0]

    def to_physical(self, cells: np.ndarray, ref: np.ndarray) -> np.ndarray:
        cells = np.asarray(cells)
        J = self.jacobians[cells]
        return self.vertices[self.cells[cells, 0]] + np.einsum("nij,nj->ni", J, ref)

    # ------------------------------------------------------------------
    def validate(self) -> None:
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshError("cells must be an (n, 3) array")
        if len(self.cell_order) != self.n_cells or len(self.generation) != self.n_cells:
            raise MeshError("cell_order and generation must have one entry per cell")
        bad = np.flatnonzero(self.signed_areas <= 0.0)
        if len(bad):
            raise MeshError(f"cells {bad[:5].tolist()} have non-positive signed area")
        n_b = len(self.boundary)
        if len(self.boundary_tag) != n_b or len(self.boundary_segment) != n_b:
            raise MeshError("boundary arrays must be aligned")
        on_boundary = np.flatnonzero(self.edge_cells[:, 1] < 0)
        ids = self.boundary_edge_ids
        if len(np.unique(ids)) != len(ids):
            raise MeshError("boundary edge tagged more than once")
        if not np.array_equal(np.sort(ids), on_boundary):
            raise MeshError("boundary tags must cover exactly the boundary edges")

    def with_orders(self, orders) -> "Mesh":
        orders = np.broadcast_to(np.asarray(orders, dtype=np.int64), (self.n_cells,)).copy()
        return replace(self, cell_order=orders)

    def corner_vertices(self) -> np.ndarray:
        """Vertices where two boundary edges of different segment or tag meet."""
        seen: dict[int, tuple[int, int]] = {}
        corners = set()
        for (a, b), tag, seg in zip(self.boundary.tolist(), self.boundary_tag.tolist(),
                                     self.boundary_segment.tolist()):
            for v in (a, b):
                if v in seen and seen[v] != (tag, seg):
                    corners.add(v)
                seen.setdefault(v, (tag, seg))
        return np.array(sorted(corners), dtype=np.int64)


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------
SQUARE_SIDES = ("bottom", "right", "top", "left")


def generate_structured_square(
    n: int,
    bounds: Sequence[float] = (-0.5, 0.5, -0.5, 0.5),
    tag_rule: Mapping[str, Tag] | None = None,
    order: int = 1,
) -> Mesh:
    """Uniform n-by-n grid of squares, each cut into two triangles.

    ``tag_rule`` maps side names (bottom, right, top, left) to tags;
    sides get segment ids 0..3 in that order.
    """
    if n < 1:
        raise MeshError("n must be at least 1")
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"invalid bounds {bounds}")
    tag_rule = dict(tag_rule or {})
    unknown = set(tag_rule) - set(SQUARE_SIDES)
    if unknown:
        raise MeshError(f"unknown sides {sorted(unknown)}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, b, c])
    cells[1::2] = np.column_stack([a, c, d])

    sides = {
        "bottom": np.column_stack([idx[0, :-1], idx[0, 1:]]),
        "right": np.column_stack([idx[:-1, -1], idx[1:, -1]]),
        "top": np.column_stack([idx[-1, 1:], idx[-1, :-1]]),
        "left": np.column_stack([idx[1:, 0], idx[:-1, 0]]),
    }
    boundary, tags, segs = [], [], []
    for s, name in enumerate(SQUARE_SIDES):
        boundary.append(sides[name])
        tags.append(np.full(n, int(tag_rule.get(name, Tag.DIRICHLET_T))))
        segs.append(np.full(n, s))
    nc = len(cells)
    return Mesh(vertices, cells, np.vstack(boundary), np.concatenate(tags),
                np.concatenate(segs), np.full(nc, order), np.zeros(nc, dtype=np.int64))


def generate_quarter_annulus(r_in: float, r_out: float, resolution: float, order: int = 1) -> Mesh:
    """Structured quarter annulus in the first quadrant.

    Segments: 0 inner arc (Dirichlet), 1 outer arc (Dirichlet),
    2 cut along y=0 and 3 cut along x=0 (both Neumann).
    """
    if not 0.0 < r_in < r_out:
        raise MeshError(f"need 0 < r_in < r_out, got {r_in}, {r_out}")
    if resolution <= 0:
        raise MeshError("resolution must be positive")
    n_r = max(1, math.ceil((r_out - r_in) / resolution))
    n_t = max(1, math.ceil(0.5 * math.pi * r_out / resolution))
    r = np.linspace(r_in, r_out, n_r + 1)
    t = np.linspace(0.0, 0.5 * math.pi, n_t + 1)
    R, Th = np.meshgrid(r, t, indexing="ij")
    vertices = np.column_stack([(R * np.cos(Th)).ravel(), (R * np.sin(Th)).ravel()])
    idx = np.arange((n_r + 1) * (n_t + 1)).reshape(n_r + 1, n_t + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    # alternate the diagonal so the mesh has no preferred direction
    flip = ((np.arange(n_r)[:, None] + np.arange(n_t)[None, :]) % 2).ravel().astype(bool)
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    cells = np.vstack([t1, t2])

    boundary = np.vstack([
        np.column_stack([idx[0, 1:], idx[0, :-1]]),      # inner arc, walked clockwise
        np.column_stack([idx[-1, :-1], idx[-1, 1:]]),    # outer arc
        np.column_stack([idx[:-1, 0], idx[1:, 0]]),      # y = 0
        np.column_stack([idx[1:, -1], idx[:-1, -1]]),    # x = 0
    ])
    tags = np.concatenate([np.full(n_t, Tag.DIRICHLET_T), np.full(n_t, Tag.DIRICHLET_T),
                           np.full(n_r, Tag.NEUMANN_Q), np.full(n_r, Tag.NEUMANN_Q)])
    segs = np.concatenate([np.full(n_t, 0), np.full(n_t, 1), np.full(n_r, 2), np.full(n_r, 3)])
    nc = len(cells)
    curves = {0: Circle((0.0, 0.0), r_in), 1: Circle((0.0, 0.0), r_out)}
    return Mesh(vertices, cells, boundary, tags, segs, np.full(nc, order),
                np.zeros(nc, dtype=np.int64), curves)


# brick geometry defaults are placeholders, not measured dimensions
BRICK_HALF_WIDTH = 0.23
BRICK_BORE_RADIUS = 0.13
BRICK_HOLES = (((0.19, 0.07), 0.02), ((0.07, 0.19), 0.02))

BRICK_BORE, BRICK_OUTER_X, BRICK_OUTER_Y, BRICK_CUT_Y0, BRICK_CUT_X0 = 0, 1, 2, 3, 4
BRICK_FIRST_HOLE = 5


def generate_quarter_brick(
    r_bore: float = BRICK_BORE_RADIUS,
    outer_half_width: float = BRICK_HALF_WIDTH,
    hole_spec: Sequence[tuple[tuple[float, float], float]] = BRICK_HOLES,
    resolution: float = 0.02,
    order: int = 1,
    smoothing: int = 8,
) -> Mesh:
    """Quarter of a square brick slice with a bore at the origin.

    Segments: 0 bore arc (Dirichlet), 1 edge x=W and 2 edge y=W
    (Dirichlet), 3 cut y=0 and 4 cut x=0 (Neumann), 5+i hole i (Neumann).
    """
    W, r, h = float(outer_half_width), float(r_bore), float(resolution)
    if not 0.0 < r < W:
        raise MeshError(f"need 0 < r_bore < outer_half_width, got {r}, {W}")
    if h <= 0:
        raise MeshError("resolution must be positive")
    holes = [((float(c[0]), float(c[1])), float(rad)) for c, rad in hole_spec]
    for i, ((cx, cy), rad) in enumerate(holes):
        if rad <= 0:
            raise MeshError(f"hole {i} has non-positive radius")
        if (math.hypot(cx, cy) - rad <= r or cx - rad <= 0 or cy - rad <= 0
                or cx + rad >= W or cy + rad >= W):
            raise MeshError(f"hole {i} intersects the bore or the outer boundary")
        for j in range(i):
            (dx, dy), rj = holes[j]
            if math.hypot(cx - dx, cy - dy) <= rad + rj:
                raise MeshError(f"holes {j} and {i} overlap")

    def inside(p: np.ndarray) -> np.ndarray:
        ok = (p[:, 0] > 0) & (p[:, 1] > 0) & (p[:, 0] < W) & (p[:, 1] < W)
        ok &= np.hypot(p[:, 0], p[:, 1]) > r
        for (cx, cy), rad in holes:
            ok &= np.hypot(p[:, 0] - cx, p[:, 1] - cy) > rad
        return ok

    def boundary_distance(p: np.ndarray) -> np.ndarray:
        d = np.minimum.reduce([p[:, 0], p[:, 1], W - p[:, 0], W - p[:, 1],
                               np.hypot(p[:, 0], p[:, 1]) - r])
        for (cx, cy), rad in holes:
            d = np.minimum(d, np.hypot(p[:, 0] - cx, p[:, 1] - cy) - rad)
        return d

    spacing = 0.8 * h
    chains: list[tuple[np.ndarray, int, int]] = []

    def line(p, q, seg, tag):
        n = max(1, math.ceil(math.dist(p, q) / spacing))
        s = np.linspace(0, 1, n + 1)[:, None]
        chains.append((np.asarray(p) + s * (np.asarray(q) - np.asarray(p)), seg, tag))

    def arc(center, rad, t0, t1, seg, tag):
        n = max(3, math.ceil(abs(t1 - t0) * rad / spacing))
        t = np.linspace(t0, t1, n + 1)
        chains.append((np.column_stack([center[0] + rad * np.cos(t), center[1] + rad * np.sin(t)]), seg, tag))

    # outer loop counterclockwise around the solid
    line((r, 0.0), (W, 0.0), BRICK_CUT_Y0, Tag.NEUMANN_Q)
    line((W, 0.0), (W, W), BRICK_OUTER_X, Tag.DIRICHLET_T)
    line((W, W), (0.0, W), BRICK_OUTER_Y, Tag.DIRICHLET_T)
    line((0.0, W), (0.0, r), BRICK_CUT_X0, Tag.NEUMANN_Q)
    arc((0.0, 0.0), r, 0.5 * math.pi, 0.0, BRICK_BORE, Tag.DIRICHLET_T)
    for i, (c, rad) in enumerate(holes):
        arc(c, rad, 2 * math.pi, 0.0, BRICK_FIRST_HOLE + i, Tag.NEUMANN_Q)

    curves = {BRICK_BORE: Circle((0.0, 0.0), r)}
    for i, (c, rad) in enumerate(holes):
        curves[BRICK_FIRST_HOLE + i] = Circle(c, rad)
    return _mesh_from_chains(chains, inside, boundary_distance, h, order, smoothing, curves)


def _mesh_from_chains(chains, inside, boundary_distance, h, order, smoothing, curves) -> Mesh:
    pts: list[np.ndarray] = []
    index: dict[tuple[float, float], int] = {}
    bnd, tags, segs = [], [], []

    def vid(p):
        key = (round(float(p[0]), 12), round(float(p[1]), 12))
        if key not in index:
            index[key] = len(pts)
            pts.append(np.array(key))
        return index[key]

    for coords, seg, tag in chains:
        ids = [vid(p) for p in coords]
        for a, b in zip(ids[:-1], ids[1:]):
            if a != b:
                bnd.append((a, b))
                tags.append(int(tag))
                segs.append(seg)
    n_fixed = len(pts)
    fixed = np.array(pts)

    # interior points on a hexagonal lattice away from the boundary
    lo, hi = fixed.min(axis=0), fixed.max(axis=0)
    dy = h * math.sqrt(3) / 2
    rows = []
    for k, y in enumerate(np.arange(lo[1], hi[1] + dy, dy)):
        xs = np.arange(lo[0] + (0.5 * h if k % 2 else 0.0), hi[0] + h, h)
        rows.append(np.column_stack([xs, np.full(len(xs), y)]))
    cand = np.vstack(rows)
    cand = cand[inside(cand) & (boundary_distance(cand) > 0.6 * h)]
    points = np.vstack([fixed, cand])

    for _ in range(smoothing + 1):
        tri = Delaunay(points).simplices
        cent = points[tri].mean(axis=1)
        tri = tri[inside(cent)]
        if _ == smoothing:
            break
        # Laplacian smoothing of the free points
        nbr_sum = np.zeros_like(points)
        nbr_cnt = np.zeros(len(points))
        for i, j in ((0, 1), (1, 2), (2, 0)):
            np.add.at(nbr_sum, tri[:, i], points[tri[:, j]])
            np.add.at(nbr_cnt, tri[:, i], 1)
            np.add.at(nbr_sum, tri[:, j], points[tri[:, i]])
            np.add.at(nbr_cnt, tri[:, j], 1)
        free = np.arange(n_fixed, len(points))
        free = free[nbr_cnt[free] > 0]
        moved = nbr_sum[free] / nbr_cnt[free, None]
        keep = inside(moved) & (boundary_distance(moved) > 0.3 * h)
        points[free[keep]] = moved[keep]

    # orient counterclockwise and drop unused points
    v = points[tri]
    area = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
    tri = np.where((area < 0)[:, None], tri[:, [0, 2, 1]], tri)
    tri = tri[np.abs(area) > 1e-14 * h * h]
    used = np.unique(np.concatenate([tri.ravel(), np.arange(n_fixed)]))
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nc = len(tri)
    try:
        return Mesh(points[used], remap[tri], remap[np.array(bnd)], np.array(tags), np.array(segs),
                    np.full(nc, order), np.zeros(nc, dtype=np.int64), curves)
    except MeshError as exc:
        raise MeshError(f"boundary recovery failed ({exc}); try a smaller resolution") from None


# ----------------------------------------------------------------------
# refinement
# ----------------------------------------------------------------------
def _longest_local_edge(mesh: Mesh) -> np.ndarray:
    lengths = mesh.edge_lengths[mesh.cell_edges]
    # deterministic tie-break on the global edge id
    key = lengths - 1e-12 * lengths.max() * (mesh.cell_edges / max(mesh.n_edges, 1))
    return np.argmax(key, axis=1)


def refine(mesh: Mesh, marked) -> tuple[Mesh, np.ndarray]:
    """Longest-edge bisection of the marked cells with conforming closure.

    Returns the new mesh and, for every new cell, the index of its parent
    cell in ``mesh``. Unrefined cells map to themselves.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if len(marked) and (marked.min() < 0 or marked.max() >= mesh.n_cells):
        raise IndexError("marked cell id out of range")
    if len(marked) == 0:
        return mesh, np.arange(mesh.n_cells)

    ce = mesh.cell_edges
    longest = _longest_local_edge(mesh)
    long_edge = ce[np.arange(mesh.n_cells), longest]
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[long_edge[marked]] = True
    while True:
        has = edge_marked[ce].any(axis=1)
        need = has & ~edge_marked[long_edge]
        if not need.any():
            break
        edge_marked[long_edge[need]] = True

    # midpoints, snapped onto curved boundaries
    split = np.flatnonzero(edge_marked)
    mid_id = -np.ones(mesh.n_edges, dtype=np.int64)
    mid_id[split] = mesh.n_vertices + np.arange(len(split))
    e = mesh.edges[split]
    mids = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    straight = mids.copy()
    seg = mesh.edge_segment[split]
    for s, curve in mesh.curves.items():
        on = seg == s
        if on.any():
            mids[on] = curve.project(mids[on])
    vertices = np.vstack([mesh.vertices, mids])

    cells_out: list = []
    parent: list = []
    c = mesh.cells
    for cell in range(mesh.n_cells):
        loc = edge_marked[ce[cell]]
        if not loc.any():
            cells_out.append(c[cell])
            parent.append(cell)
            continue
        L = longest[cell]
        A, B, C = c[cell, L], c[cell, (L + 1) % 3], c[cell, (L + 2) % 3]
        M = mid_id[ce[cell, L]]
        kids = []
        if loc[(L + 2) % 3]:  # edge AB
            N = mid_id[ce[cell, (L + 2) % 3]]
            kids += [(A, N, M), (N, B, M)]
        else:
            kids.append((A, B, M))
        if loc[(L + 1) % 3]:  # edge CA
            P = mid_id[ce[cell, (L + 1) % 3]]
            kids += [(A, M, P), (P, M, C)]
        else:
            kids.append((A, M, C))
        cells_out.extend(kids)
        parent.extend([cell] * len(kids))
    cells_new = np.array(cells_out, dtype=np.int64)
    parent = np.array(parent, dtype=np.int64)

    # undo snapping wherever it would invert a cell
    for _ in range(3):
        v = vertices[cells_new]
        ar = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0])
        bad = np.unique(cells_new[ar <= 0])
        bad = bad[bad >= mesh.n_vertices]
        if len(bad) == 0:
            break
        vertices[bad] = straight[bad - mesh.n_vertices]

    # split tagged boundary edges
    bnd, tags, segs = [], [], []
    bids = mesh.boundary_edge_ids
    for row, eid in enumerate(bids):
        a, b = mesh.boundary[row]
        t, s = mesh.boundary_tag[row], mesh.boundary_segment[row]
        if edge_marked[eid]:
            m = mid_id[eid]
            bnd += [(a, m), (m, b)]
            tags += [t, t]
            segs += [s, s]
        else:
            bnd.append((a, b))
            tags.append(t)
            segs.append(s)

    split_parent = np.bincount(parent, minlength=mesh.n_cells)[parent] > 1
    gen = mesh.generation[parent] + split_parent
    new = Mesh(vertices, cells_new, np.array(bnd), np.array(tags), np.array(segs),
               mesh.cell_order[parent], gen, dict(mesh.curves))
    return new, parent


def children_map(parent: np.ndarray) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for child, p in enumerate(parent.tolist()):
        out.setdefault(p, []).append(child)
    return out


def element_size(mesh: Mesh, cell: int) -> float:
    return mesh.element_size(cell)


# ----------------------------------------------------------------------
# plain-text format
# ----------------------------------------------------------------------
_TAG_NAMES = {Tag.DIRICHLET_T: "T", Tag.NEUMANN_Q: "q"}
_TAG_FROM = {"T": Tag.DIRICHLET_T, "q": Tag.NEUMANN_Q}


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    lines = [MESH_HEADER, str(mesh.n_vertices)]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(str(mesh.n_cells))
    lines += [f"{a} {b} {c} {p}" for (a, b, c), p in zip(mesh.cells.tolist(), mesh.cell_order.tolist())]
    lines.append(str(len(mesh.boundary)))
    lines += [f"{a} {b} {_TAG_NAMES[Tag(t)]} {s}"
              for (a, b), t, s in zip(mesh.boundary.tolist(), mesh.boundary_tag.tolist(),
                                      mesh.boundary_segment.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    """Read the plain-text format. Curve data is not stored, so a mesh read
    back from disk refines with straight boundary edges."""
    tokens = Path(path).read_text().splitlines()
    if not tokens or tokens[0].strip() != MESH_HEADER:
        raise MeshError(f"{path}: missing '{MESH_HEADER}' header")
    it = iter(tokens[1:])
    nv = int(next(it))
    verts = np.array([[float(t) for t in next(it).split()] for _ in range(nv)])
    nc = int(next(it))
    rows = [next(it).split() for _ in range(nc)]
    cells = np.array([[int(t) for t in r[:3]] for r in rows])
    order = np.array([int(r[3]) for r in rows])
    nb = int(next(it))
    rows = [next(it).split() for _ in range(nb)]
    bnd = np.array([[int(r[0]), int(r[1])] for r in rows]).reshape(-1, 2)
    tags = np.array([_TAG_FROM[r[2]] for r in rows])
    segs = np.array([int(r[3]) for r in rows])
    return Mesh(verts, cells, bnd, tags, segs, order, np.zeros(nc, dtype=np.int64))


def circumradii(mesh: Mesh) -> np.ndarray:
    l = mesh.edge_lengths[mesh.cell_edges]
    return l.prod(axis=1) / (4.0 * mesh.signed_areas)


BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
