"""Adaptive hp-refinement driven by the error estimator and by the
distance of the solution to the material data."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .indicators import IndicatorReport, compute_indicators
from .mesh import Mesh, refine
from .solvers.dd import DDState, Init, SolveReport, StopCriteria, build_system, dd_iterate
from .solvers.problem import ProblemSpec

log = logging.getLogger(__name__)

MAX_WEAKER_ORDER = 3


@dataclass(frozen=True)
class Thresholds:
    c_p: float = 1.5
    c_d: float = 4.0
    c_s: float = 0.5
    c_sa: float = 0.5
    c_h: float = 4.0
    n_rounds: int = 6

    def __post_init__(self):
        for name in ("c_p", "c_d", "c_s", "c_sa", "c_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"threshold {name} must be positive")
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be non-negative")


@dataclass(frozen=True, eq=False)
class MarkSet:
    p_marks: np.ndarray
    h_marks: np.ndarray

    def __bool__(self) -> bool:
        return bool(len(self.p_marks) or len(self.h_marks))


def corner_cells(mesh: Mesh) -> np.ndarray:
    """Boolean mask of cells touching a boundary corner."""
    corners = mesh.corner_vertices()
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[corners] = True
    return mask[mesh.cells].any(axis=1)


def mark(report: IndicatorReport, mesh: Mesh, thresholds: Thresholds = Thresholds()) -> MarkSet:
    t = thresholds
    mu, d_ave, d_std, d_rms = report.mu, report.d_ave, report.d_std, report.d_rms
    if d_rms > 0:
        near = d_ave <= t.c_d * d_rms
        spread = (d_std > t.c_s * d_rms) & (d_std > t.c_sa * d_ave)
    else:
        near = np.ones(len(mu), dtype=bool)
        spread = np.zeros(len(mu), dtype=bool)
    p = (mu > t.c_p * report.mu_hat_avg) & near
    h = ((mu > t.c_h * report.mu_avg) & corner_cells(mesh)) | spread
    return MarkSet(np.flatnonzero(p), np.flatnonzero(h))


@dataclass(eq=False)
class Round:
    mesh: Mesh
    orders: np.ndarray
    report: IndicatorReport
    state: DDState
    solve: SolveReport
    marks: MarkSet | None
    ever_p_refined: np.ndarray
    saturated: int = 0


@dataclass(eq=False)
class AdaptResult:
    rounds: list[Round] = field(default_factory=list)

    @property
    def final(self) -> Round:
        return self.rounds[-1]


def transfer_assignment(old: DDState, new_system, parent: np.ndarray, material):
    """Evaluate the old fields at the new Gauss points (through the parent
    map) and search the data there."""
    pts = new_system.points
    old_mesh = old.system.mesh
    pc = parent[pts.cells]
    ref = old_mesh.to_reference(pc, pts.xy)
    T, g, q = old.system.evaluate(old.x, pc, np.clip(ref, 0.0, 1.0))
    return material.search(T if getattr(material, "has_temperature", False) else None, g, q)


def adapt_loop(problem: ProblemSpec, material, thresholds: Thresholds = Thresholds(),
               init=Init.RANDOM, seed: int = 0, stop: StopCriteria = StopCriteria(),
               max_order: int = MAX_WEAKER_ORDER, exact=None,
               on_round: Callable[[int, Round], None] | None = None) -> AdaptResult:
    """Solve, estimate, mark and refine for ``thresholds.n_rounds`` rounds,
    then solve once more on the final discretisation."""
    spec = problem
    result = AdaptResult()
    ever_p = np.zeros(spec.mesh.n_cells, dtype=bool)
    system = build_system(spec)
    state, rep = dd_iterate(system, material, init=init, stop=stop, seed=seed)
    for i in range(thresholds.n_rounds + 1):
        report = compute_indicators(state, material.scaling, thresholds.c_d, exact)
        last = i == thresholds.n_rounds
        marks = None if last else mark(report, spec.mesh, thresholds)
        rnd = Round(spec.mesh, spec.orders, report, state, rep, marks, ever_p.copy())
        result.rounds.append(rnd)
        if last:
            if on_round:
                on_round(i, rnd)
            break
        if not marks:
            log.info("round %d: no cells marked, stopping early", i)
            if on_round:
                on_round(i, rnd)
            break
        orders = spec.orders
        p_marks = marks.p_marks
        capped = orders[p_marks] >= max_order
        rnd.saturated = int(capped.sum())
        if rnd.saturated:
            log.info("round %d: %d p-marks dropped at the maximum order %d", i, rnd.saturated, max_order)
        p_marks = p_marks[~capped]
        orders = orders.copy()
        orders[p_marks] += 1
        ever_p[p_marks] = True
        if on_round:
            on_round(i, rnd)
        mesh = spec.mesh.with_orders(orders)
        new_mesh, parent = refine(mesh, marks.h_marks)
        ever_p = ever_p[parent]
        spec = replace(spec, mesh=new_mesh, order=new_mesh.cell_order)
        new_system = build_system(spec)
        seed_assign = transfer_assignment(state, new_system, parent, material)
        x0 = new_system.solve(seed_assign.g, seed_assign.q)
        state, rep = dd_iterate(new_system, material, stop=stop, x0=x0)
    return result
