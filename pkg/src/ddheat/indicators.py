"""A posteriori indicators for the mixed data-driven solution and
distance-to-data statistics."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .femcore import edge_points, gauss_points, tabulate
from .solvers.dd import DDState, distance_rms, field_rms

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IndicatorReport:
    eta: np.ndarray
    nu: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    d_ave: np.ndarray
    d_std: np.ndarray
    edges: np.ndarray          # interior edge ids
    gamma_edge: np.ndarray
    mu_g: float
    mu_avg: float
    mu_hat_avg: float
    d_rms: float
    eps_d: float
    c_d: float
    e_tot: np.ndarray | None = None

    @property
    def excluded(self) -> np.ndarray:
        """Cells whose mean distance exceeds c_d times the field RMS."""
        if self.d_rms <= 0:
            return np.zeros(len(self.mu), dtype=bool)
        return self.d_ave > self.c_d * self.d_rms


# ----------------------------------------------------------------------
# elementary pieces
# ----------------------------------------------------------------------
def estimator(eta, nu, gamma) -> np.ndarray:
    """Per-element combination sqrt(eta^2 + nu^2 + gamma^2)."""
    eta, nu, gamma = (np.asarray(a, dtype=float) for a in (eta, nu, gamma))
    return np.sqrt(eta ** 2 + nu ** 2 + gamma ** 2)


def global_estimator(eta, nu, gamma_edge) -> float:
    """sqrt(sum(eta^2 + nu^2) + sum over interior edges of gamma_l^2)."""
    eta, nu, ge = (np.asarray(a, dtype=float) for a in (eta, nu, gamma_edge))
    return float(np.sqrt(np.sum(eta ** 2 + nu ** 2) + np.sum(ge ** 2)))


def plain_average(mu) -> float:
    mu = np.asarray(mu, dtype=float)
    return float(mu.mean()) if len(mu) else 0.0


def bounded_average(mu, d_ave, c_d: float, d_rms: float) -> float:
    """Mean of mu over all cells where cells farther than c_d * d_rms from
    the data contribute zero; the divisor stays the total count."""
    mu = np.asarray(mu, dtype=float)
    if len(mu) == 0:
        return 0.0
    if d_rms <= 0:
        return plain_average(mu)
    keep = np.asarray(d_ave) <= c_d * d_rms
    return float(np.sum(mu[keep]) / len(mu))


def distance_stats(distance: np.ndarray, offsets: np.ndarray):
    """Per-cell mean and population standard deviation of point distances."""
    counts = np.diff(offsets)
    ave = np.add.reduceat(distance, offsets[:-1]) / counts
    dev = distance - np.repeat(ave, counts)
    var = np.add.reduceat(dev * dev, offsets[:-1]) / counts
    return ave, np.sqrt(var)


def element_field_rms(state: DDState, scaling) -> np.ndarray:
    """Per-cell version of the scaled field RMS."""
    sysm = state.system
    T, g, q = sysm.fields(state.x)
    w = sysm.points.weights
    val = scaling.S_g * (g * g).sum(1) + scaling.S_q * (q * q).sum(1)
    if scaling.S_T is not None:
        val = val + scaling.S_T * T * T
    pc = sysm.points
    return np.sqrt(pc.per_cell(w * val) / pc.per_cell(w))


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------
def jump_indicators(state: DDState, edges: np.ndarray | None = None):
    """gamma_l = h^(-1/2) ||[T]||_{L2(l)} on interior edges, with h the mean
    size of the two neighbouring cells."""
    sysm = state.system
    mesh = sysm.mesh
    if edges is None:
        edges = mesh.interior_edges
    if len(edges) == 0:
        return edges, np.zeros(0)
    dm = sysm.blocks["T"].dofmap
    xT = sysm.block(state.x, "T")
    deg = 2 * int(dm.orders.max()) + 2
    a = edge_points(mesh, edges, deg, 0)
    b = edge_points(mesh, edges, deg, 1)
    jump = tabulate(dm, a.cells, a.ref)(xT) - tabulate(dm, b.cells, b.ref)(xT)
    norm = np.sqrt(np.add.reduceat(a.weights * jump ** 2, np.arange(0, len(jump), a.n_per_edge)))
    hs = mesh.element_sizes()
    h = 0.5 * (hs[mesh.edge_cells[edges, 0]] + hs[mesh.edge_cells[edges, 1]])
    return edges, norm / np.sqrt(h)


def compute_indicators(state: DDState, scaling, c_d: float = 4.0, exact=None,
                       error_degree_boost: int = 6) -> IndicatorReport:
    """All element indicators of a solved state. ``exact`` is an object
    with T, g and q callables (for example ExpHat) enabling e_tot."""
    sysm = state.system
    mesh = sysm.mesh
    pts = sysm.points
    w = pts.weights
    full = sysm.evaluate_full(state.x, pts.cells, pts.ref)
    diff = full["gradT"] - full["g"]
    eta = pts.per_cell(w * (diff * diff).sum(1))
    h = mesh.element_sizes()
    if full["divq"] is not None:
        r = sysm.spec.f(pts.xy) - full["divq"]
        nu = h * pts.per_cell(w * r * r)
    else:
        nu = np.zeros(mesh.n_cells)
    edges, gl = jump_indicators(state)
    gamma = np.zeros(mesh.n_cells)
    if len(edges):
        np.add.at(gamma, mesh.edge_cells[edges, 0], gl)
        np.add.at(gamma, mesh.edge_cells[edges, 1], gl)
    mu = estimator(eta, nu, gamma)
    d_ave, d_std = distance_stats(state.distance, pts.offsets)
    d_rms = field_rms(sysm, state.x, scaling)
    if d_rms == 0:
        log.warning("all fields vanish; distance thresholds are skipped")
    e_tot = None
    if exact is not None:
        e_tot = total_error(state, exact, error_degree_boost)
    return IndicatorReport(eta, nu, gamma, mu, d_ave, d_std, edges, gl, global_estimator(eta, nu, gl),
                           plain_average(mu), bounded_average(mu, d_ave, c_d, d_rms), d_rms,
                           distance_rms(sysm, state.distance), c_d, e_tot)


def error_norms(state: DDState, exact, boost: int = 6):
    """Per-cell squared L2 errors of T, grad T (broken) and q."""
    sysm = state.system
    mesh = sysm.mesh
    deg = 2 * (sysm.spec.orders + 1) + boost
    pts = gauss_points(mesh, np.minimum(deg, 30))
    full = sysm.evaluate_full(state.x, pts.cells, pts.ref)
    w = pts.weights
    eT = pts.per_cell(w * (full["T"] - exact.T(pts.xy)) ** 2)
    dg = full["gradT"] - exact.g(pts.xy)
    eG = pts.per_cell(w * (dg * dg).sum(1))
    dq = full["q"] - exact.q(pts.xy)
    eq = pts.per_cell(w * (dq * dq).sum(1))
    return eT, eG, eq


def total_error(state: DDState, exact, boost: int = 6) -> np.ndarray:
    """||T - T_exact||_{H1(e)} + ||q - q_exact||_{L2(e)} per cell."""
    eT, eG, eq = error_norms(state, exact, boost)
    return np.sqrt(eT + eG) + np.sqrt(eq)


def write_report(report: IndicatorReport, orders: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        head = ["cell", "p", "eta", "nu", "gamma", "mu", "d_ave", "d_std"]
        if report.e_tot is not None:
            head.append("e_tot")
        w.writerow(head)
        for c in range(len(report.mu)):
            row = [c, int(orders[c])] + [f"{v[c]:.10e}" for v in
                                         (report.eta, report.nu, report.gamma, report.mu, report.d_ave, report.d_std)]
            if report.e_tot is not None:
                row.append(f"{report.e_tot[c]:.10e}")
            w.writerow(row)
        w.writerow([])
        w.writerow(["mu_g", "mu_avg", "mu_hat_avg", "d_rms", "eps_d"])
        w.writerow([f"{v:.10e}" for v in (report.mu_g, report.mu_avg, report.mu_hat_avg, report.d_rms, report.eps_d)])
