"""Legacy ASCII VTK output of piecewise-polynomial fields and small CSV
helpers with fixed float formatting."""

from __future__ import annotations

import csv
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .femcore import lattice_points
from .femcore.quadrature import newton_cotes_lattice
from .mesh import Mesh

FLOAT_FMT = "{:.10e}"


@lru_cache(maxsize=None)
def lattice_triangles(n_eval: int) -> np.ndarray:
    """Sub-triangles of the regular reference lattice, as indices into the
    ordering of ``newton_cotes_lattice``."""
    index = {}
    for k, (i, j) in enumerate((i, j) for j in range(n_eval + 1) for i in range(n_eval + 1 - j)):
        index[i, j] = k
    tris = []
    for j in range(n_eval):
        for i in range(n_eval - j):
            tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j + 1 < n_eval:
                tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return np.array(tris, dtype=np.int64)


def _fmt(values) -> str:
    return " ".join(FLOAT_FMT.format(float(v)) for v in np.ravel(values))


def write_vtk(path: str | Path, mesh: Mesh, n_eval: int, point_data: Mapping[str, np.ndarray],
              cell_data: Mapping[str, np.ndarray] | None = None, title: str = "ddheat fields") -> None:
    """Write fields sampled on the per-cell lattice of ``lattice_points``.

    Every cell is split into n_eval^2 sub-triangles with duplicated nodes,
    so discontinuous fields are rendered faithfully. ``point_data`` values
    are (n_points,) scalars or (n_points, 2) vectors; ``cell_data`` holds
    one value per mesh cell and is repeated on the sub-triangles.
    """
    pts = lattice_points(mesh, n_eval)
    m = len(newton_cotes_lattice(n_eval).points)
    sub = lattice_triangles(n_eval)
    conn = (np.arange(mesh.n_cells)[:, None, None] * m + sub[None]).reshape(-1, 3)
    n_sub = len(sub)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    xyz = np.column_stack([pts.xy, np.zeros(len(pts))])
    lines += [_fmt(row) for row in xyz]
    lines.append(f"CELLS {len(conn)} {4 * len(conn)}")
    lines += ["3 " + " ".join(str(int(i)) for i in row) for row in conn]
    lines.append(f"CELL_TYPES {len(conn)}")
    lines += ["5"] * len(conn)
    if point_data:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, v in point_data.items():
            lines += _vtk_array(name, np.asarray(v, dtype=float), len(pts))
    if cell_data:
        lines.append(f"CELL_DATA {len(conn)}")
        for name, v in cell_data.items():
            v = np.asarray(v)
            if len(v) != mesh.n_cells:
                raise ValueError(f"cell field {name!r} has {len(v)} values for {mesh.n_cells} cells")
            lines += _vtk_array(name, np.repeat(v.astype(float), n_sub, axis=0), len(conn))
    Path(path).write_text("\n".join(lines) + "\n")


def _vtk_array(name: str, v: np.ndarray, n: int) -> list[str]:
    name = name.replace(" ", "_")
    if len(v) != n:
        raise ValueError(f"field {name!r} has {len(v)} values, expected {n}")
    if v.ndim == 1:
        return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [FLOAT_FMT.format(x) for x in v]
    if v.ndim == 2 and v.shape[1] == 2:
        v3 = np.column_stack([v, np.zeros(n)])
        return [f"VECTORS {name} double"] + [_fmt(row) for row in v3]
    raise ValueError(f"field {name!r} must be scalar or 2-vector")


def state_point_data(system, x: np.ndarray, n_eval: int) -> dict[str, np.ndarray]:
    """T, g, q and their magnitudes on the lattice of ``system.mesh``."""
    pts = lattice_points(system.mesh, n_eval)
    T, g, q = system.evaluate(x, pts.cells, pts.ref)
    return {"T": T, "g": g, "q": q, "g_mag": np.linalg.norm(g, axis=1), "q_mag": np.linalg.norm(q, axis=1)}


def write_state_vtk(path, system, x: np.ndarray, n_eval: int = 3, extra_cells=None) -> None:
    cells = {"p": system.mesh.cell_order}
    if extra_cells:
        cells.update(extra_cells)
    write_vtk(path, system.mesh, n_eval, state_point_data(system, x, n_eval), cells)


def read_vtk_points(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Points and triangle connectivity of a file written by ``write_vtk``."""
    lines = Path(path).read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("POINTS"))
    n = int(lines[i].split()[1])
    xyz = np.array([[float(t) for t in l.split()] for l in lines[i + 1:i + 1 + n]])
    j = next(k for k, l in enumerate(lines) if l.startswith("CELLS"))
    nc = int(lines[j].split()[1])
    conn = np.array([[int(t) for t in l.split()[1:]] for l in lines[j + 1:j + 1 + nc]])
    return xyz, conn


def write_table(path: str | Path, header: Sequence[str], rows) -> None:
    """CSV with floats in fixed scientific notation and ints verbatim, so
    repeated runs produce identical bytes."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return v


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
