"""Material datasets: generation, corruption, scaling and exact
nearest-neighbour search in the weighted phase-space metric."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

COLUMNS_5D = ("T", "gx", "gy", "qx", "qy")
COLUMNS_4D = ("gx", "gy", "qx", "qy")
DEFAULT_K_COEFFS = (134.0, -0.1074, 3.719e-5)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Scaling:
    """Weights of the squared distance S_T dT^2 + S_g |dg|^2 + S_q |dq|^2."""

    S_g: float
    S_q: float
    S_T: float | None = None

    def __post_init__(self):
        for name in ("S_g", "S_q", "S_T"):
            v = getattr(self, name)
            if v is not None and not (np.isfinite(v) and v > 0):
                raise DatasetError(f"{name} must be positive, got {v}")

    def weights(self, has_temperature: bool) -> np.ndarray:
        w = [self.S_g, self.S_g, self.S_q, self.S_q]
        if has_temperature:
            if self.S_T is None:
                raise DatasetError("a 5D dataset needs S_T")
            w = [self.S_T] + w
        return np.array(w)


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Assigned material states per query; ``ids`` is None for the line oracle."""

    ids: np.ndarray | None
    T: np.ndarray | None
    g: np.ndarray
    q: np.ndarray
    distance: np.ndarray


@dataclass(frozen=True, eq=False)
class MaterialDataset:
    points: np.ndarray
    scaling: Scaling
    provenance: tuple[str, ...] = ()
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (4, 5):
            raise DatasetError("points must be (n, 4) or (n, 5)")
        if not np.isfinite(pts).all():
            raise DatasetError("dataset contains non-finite values")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.has_temperature and self.scaling.S_T is None:
            raise DatasetError("5D dataset requires S_T in its scaling")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_temperature(self) -> bool:
        return self.points.shape[1] == 5

    @property
    def columns(self) -> tuple[str, ...]:
        return COLUMNS_5D if self.has_temperature else COLUMNS_4D

    @property
    def T(self) -> np.ndarray | None:
        return self.points[:, 0] if self.has_temperature else None

    @property
    def g(self) -> np.ndarray:
        o = int(self.has_temperature)
        return self.points[:, o:o + 2]

    @property
    def q(self) -> np.ndarray:
        o = int(self.has_temperature)
        return self.points[:, o + 2:o + 4]

    @cached_property
    def _sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.scaling.weights(self.has_temperature))

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points * self._sqrt_weights)

    def with_scaling(self, scaling: Scaling) -> "MaterialDataset":
        return replace(self, scaling=scaling)

    def _query_matrix(self, T, g, q) -> np.ndarray:
        g = np.atleast_2d(np.asarray(g, dtype=float))
        q = np.atleast_2d(np.asarray(q, dtype=float))
        cols = [g, q]
        if self.has_temperature:
            if T is None:
                raise DatasetError("5D dataset needs a temperature in each query")
            cols.insert(0, np.atleast_1d(np.asarray(T, dtype=float))[:, None])
        return np.hstack(cols)

    def search(self, T, g, q, k: int = 4) -> SearchResult:
        """Exact nearest points; ties go to the lowest point index."""
        if len(self) == 0:
            raise DatasetError("empty dataset")
        Q = self._query_matrix(T, g, q)
        Z = Q * self._sqrt_weights
        kk = min(k, len(self))
        _, idx = self.tree.query(Z, k=kk, workers=self.workers)
        idx = idx.reshape(len(Z), kk)
        d2 = self._sq_dist(Q, idx)
        best = np.empty(len(Z), dtype=np.int64)
        dmin = d2.min(axis=1)
        tied = d2 <= dmin[:, None]
        cand = np.where(tied, idx, np.iinfo(np.int64).max)
        best[:] = cand.min(axis=1)
        # a tie may extend beyond the k returned candidates
        if kk < len(self):
            spill = np.flatnonzero(tied[:, -1])
            for i in spill:
                r = np.sqrt(dmin[i]) * (1 + 1e-12) + 1e-300
                ball = np.array(self.tree.query_ball_point(Z[i], r), dtype=np.int64)
                d2b = self._sq_dist(Q[i:i + 1], ball[None, :])[0]
                best[i] = ball[d2b <= d2b.min()].min()
        dist = np.sqrt(self._sq_dist(Q, best[:, None])[:, 0])
        return self._result(best, dist)

    def _sq_dist(self, Q: np.ndarray, idx: np.ndarray) -> np.ndarray:
        diff = self.points[idx] - Q[:, None, :]
        w = self.scaling.weights(self.has_temperature)
        return (diff * diff) @ w

    def _result(self, ids: np.ndarray, dist: np.ndarray) -> SearchResult:
        P = self.points[ids]
        o = int(self.has_temperature)
        return SearchResult(ids, P[:, 0] if o else None, P[:, o:o + 2], P[:, o + 2:o + 4], dist)

    def brute_force(self, T, g, q) -> SearchResult:
        """Exhaustive scan; reference for testing the tree search."""
        Q = self._query_matrix(T, g, q)
        ids = np.empty(len(Q), dtype=np.int64)
        dist = np.empty(len(Q))
        w = self.scaling.weights(self.has_temperature)
        for i, row in enumerate(Q):
            d2 = ((self.points - row) ** 2) @ w
            ids[i] = int(np.argmin(d2))
            dist[i] = np.sqrt(d2[ids[i]])
        return self._result(ids, dist)

    def random_assignment(self, n: int, rng: np.random.Generator) -> SearchResult:
        ids = rng.integers(0, len(self), size=n)
        return self._result(ids, np.full(n, np.nan))


def nearest(dataset: MaterialDataset, T=None, g=None, q=None):
    """Single query: returns the nearest point as a row and its distance."""
    res = dataset.search(None if T is None else [T], [g], [q])
    return dataset.points[res.ids[0]], float(res.distance[0])


# ----------------------------------------------------------------------
# saturated dataset
# ----------------------------------------------------------------------
def line_projection(g, q, k: float, S_g: float = 1.0, S_q: float = 1.0):
    """Closest point on q = -k g per vector component in the metric
    S_g dg^2 + S_q dq^2. Returns (g*, q*, distance)."""
    if k <= 0:
        raise DatasetError("conductivity must be positive")
    g = np.asarray(g, dtype=float)
    q = np.asarray(q, dtype=float)
    gs = (S_g * g - S_q * k * q) / (S_g + S_q * k * k)
    qs = -k * gs
    r2 = S_g * (g - gs) ** 2 + S_q * (q - qs) ** 2
    dist = np.sqrt(r2.sum(axis=-1)) if r2.ndim else np.sqrt(r2)
    return gs, qs, dist


@dataclass(frozen=True)
class LineOracle:
    """Stand-in for an infinitely dense dataset on the linear law q = -k g."""

    k: float
    scaling: Scaling = Scaling(1.0, 1.0)

    has_temperature = False

    def search(self, T, g, q) -> SearchResult:
        gs, qs, d = line_projection(np.atleast_2d(g), np.atleast_2d(q), self.k,
                                    self.scaling.S_g, self.scaling.S_q)
        return SearchResult(None, None if T is None else np.asarray(T, dtype=float), gs, qs, d)


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------
def generate_regular(A: float, count_G: int, k: float, scaling: Scaling | None = None) -> MaterialDataset:
    """count_G x count_G grid of gradients in [-A, A]^2 with q = -k g."""
    if count_G < 2 or A <= 0 or k <= 0:
        raise DatasetError("need count_G >= 2, A > 0 and k > 0")
    vals = np.linspace(-A, A, count_G)
    gx, gy = np.meshgrid(vals, vals, indexing="ij")
    g = np.column_stack([gx.ravel(), gy.ravel()])
    pts = np.hstack([g, -k * g])
    prov = (f"regular A={A!r} count_G={count_G} k={k!r}",)
    if scaling is None:
        scaling = compute_scaling_points(pts)
    return MaterialDataset(pts, scaling, prov)


def conductivity(T, k_coeffs=DEFAULT_K_COEFFS):
    c0, c1, c2 = k_coeffs
    return c0 + c1 * T + c2 * T * T


def generate_artexp(T_range: Sequence[float], n_levels: int, mesh, k_coeffs=DEFAULT_K_COEFFS,
                    order: int = 1, inner_segment: int = 0, outer_segment: int = 1,
                    scaling: Scaling | None = None, newton: dict | None = None) -> MaterialDataset:
    """Collect {T, grad T, q} at the Gauss points of nonlinear reference
    solves for every ordered pair of inner/outer boundary temperatures."""
    from .solvers.problem import Formulation, ProblemSpec
    from .solvers.reference import NewtonError, solve_reference_nonlinear

    if n_levels < 2:
        raise DatasetError("n_levels must be at least 2")
    levels = np.linspace(float(T_range[0]), float(T_range[1]), n_levels)
    chunks = []
    for t_in in levels:
        for t_out in levels:
            spec = ProblemSpec(
                mesh, Formulation.REFERENCE_NONLINEAR, order,
                dirichlet={inner_segment: _constant(t_in), outer_segment: _constant(t_out)},
                flux={s: None for s in set(mesh.boundary_segment.tolist()) - {inner_segment, outer_segment}},
                k_coeffs=tuple(k_coeffs))
            try:
                sol = solve_reference_nonlinear(spec, **(newton or {}))
            except NewtonError as exc:
                raise NewtonError(f"pair (T_in={t_in}, T_out={t_out}): {exc}", exc.history) from None
            T, g, q = sol.gauss_states()
            chunks.append(np.column_stack([T, g, q]))
    pts = np.vstack(chunks)
    prov = (f"artexp T_range=[{levels[0]!r},{levels[-1]!r}] n_levels={n_levels} "
            f"k_coeffs={tuple(k_coeffs)!r} cells={mesh.n_cells} order={order}",)
    if scaling is None:
        scaling = compute_scaling_points(pts)
    return MaterialDataset(pts, scaling, prov)


def _constant(value: float):
    return lambda xy, n: np.full(len(xy), value)


# ----------------------------------------------------------------------
# tweaks
# ----------------------------------------------------------------------
def _column(dataset: MaterialDataset, dimension) -> int:
    if isinstance(dimension, str):
        if dimension not in dataset.columns:
            raise DatasetError(f"unknown dimension {dimension!r}; have {dataset.columns}")
        return dataset.columns.index(dimension)
    d = int(dimension)
    if not 0 <= d < dataset.points.shape[1]:
        raise DatasetError(f"dimension id {d} out of range")
    return d


def remove_range(dataset: MaterialDataset, dimension, interval: Sequence[float]) -> MaterialDataset:
    """Drop every point whose coordinate lies in the closed interval."""
    lo, hi = sorted(map(float, interval))
    col = _column(dataset, dimension)
    v = dataset.points[:, col]
    keep = ~((v >= lo) & (v <= hi))
    if not keep.any():
        raise DatasetError("removing this range leaves an empty dataset")
    prov = dataset.provenance + (f"remove_range {dataset.columns[col]} [{lo!r},{hi!r}] removed={int((~keep).sum())}",)
    return MaterialDataset(dataset.points[keep], dataset.scaling, prov, dataset.workers)


def add_conditional_noise(dataset: MaterialDataset, sigma: float, g_mag_threshold: float,
                          seed: int) -> MaterialDataset:
    """Add N(0, sigma) to q_y of every point with |g| below the threshold."""
    if sigma < 0:
        raise DatasetError("sigma must be non-negative")
    pts = dataset.points.copy()
    mask = np.linalg.norm(dataset.g, axis=1) < g_mag_threshold
    rng = np.random.default_rng(seed)
    pts[mask, -1] += rng.normal(0.0, sigma, size=int(mask.sum())) if sigma > 0 else 0.0
    prov = dataset.provenance + (f"add_noise sigma={sigma!r} threshold={g_mag_threshold!r} seed={seed} "
                                 f"perturbed={int(mask.sum())}",)
    return MaterialDataset(pts, dataset.scaling, prov, dataset.workers)


# ----------------------------------------------------------------------
# scaling
# ----------------------------------------------------------------------
def compute_scaling_points(points: np.ndarray) -> Scaling:
    points = np.asarray(points, dtype=float)
    o = int(points.shape[1] == 5)

    def inv_var(block, name):
        v = float(np.var(block.ravel()))
        if v <= 0 or not np.isfinite(v):
            raise DatasetError(f"zero variance in {name}; set the scaling explicitly")
        return 1.0 / v

    S_T = inv_var(points[:, 0], "T") if o else None
    return Scaling(inv_var(points[:, o:o + 2], "g"), inv_var(points[:, o + 2:o + 4], "q"), S_T)


def compute_scaling(dataset: MaterialDataset) -> Scaling:
    """Inverse pooled variances of the T, g and q blocks."""
    return compute_scaling_points(dataset.points)


# ----------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------
def write_dataset(dataset: MaterialDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(dataset.columns)
        for row in dataset.points:
            w.writerow([repr(float(v)) for v in row])
    s = dataset.scaling
    meta = [f"# S_g={s.S_g!r}", f"# S_q={s.S_q!r}"] + ([f"# S_T={s.S_T!r}"] if s.S_T is not None else [])
    meta += [f"# {p}" for p in dataset.provenance]
    path.with_suffix(path.suffix + ".prov").write_text("\n".join(meta) + "\n")


def read_dataset(path: str | Path, scaling: Scaling | None = None) -> MaterialDataset:
    """Read a dataset CSV; scaling comes from the argument, else from the
    provenance sidecar, else from inverse variances."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    header = tuple(h.strip() for h in rows[0])
    if header not in (COLUMNS_4D, COLUMNS_5D):
        raise DatasetError(f"{path}: header must be {','.join(COLUMNS_5D)} or {','.join(COLUMNS_4D)}")
    pts = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    prov: list[str] = []
    stored: dict[str, float] = {}
    side = path.with_suffix(path.suffix + ".prov")
    if side.exists():
        for line in side.read_text().splitlines():
            line = line.lstrip("# ").strip()
            key = line.split("=", 1)[0]
            if key in ("S_g", "S_q", "S_T"):
                stored[key] = float(line.split("=", 1)[1])
            elif line:
                prov.append(line)
    if scaling is None:
        if {"S_g", "S_q"} <= set(stored) and (len(header) == 4 or "S_T" in stored):
            scaling = Scaling(stored["S_g"], stored["S_q"], stored.get("S_T"))
        else:
            scaling = compute_scaling_points(pts)
    return MaterialDataset(pts, scaling, tuple(prov))
