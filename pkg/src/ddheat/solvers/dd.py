"""Fixed-point driver alternating data search and field solve."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..dataset import SearchResult
from .base import DDSystem
from .problem import Formulation, ProblemSpec

log = logging.getLogger(__name__)


class Init(Enum):
    ZERO = "zero"
    RANDOM = "random"


@dataclass(frozen=True)
class StopCriteria:
    tol_eps_rel: float = 1e-8
    max_iter: int = 100
    same_assignment: bool = True


@dataclass(eq=False)
class DDState:
    system: DDSystem
    x: np.ndarray
    assignment: SearchResult
    eps_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    reason: str = ""

    @property
    def eps(self) -> float:
        return self.eps_history[-1]

    @property
    def distance(self) -> np.ndarray:
        return self.assignment.distance

    def fields(self):
        return self.system.fields(self.x)

    def block(self, name: str) -> np.ndarray:
        return self.system.block(self.x, name)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    eps: float
    wall_time: float
    queries: int
    factorization_reused: bool
    converged: bool
    reason: str


def build_system(spec: ProblemSpec) -> DDSystem:
    from .stronger import StrongerSystem
    from .weaker import WeakerSystem

    if spec.formulation is Formulation.DD_WEAKER:
        return WeakerSystem(spec)
    if spec.formulation is Formulation.DD_STRONGER:
        return StrongerSystem(spec)
    raise ValueError(f"{spec.formulation} is not a data-driven formulation")


def assemble_weaker(spec: ProblemSpec):
    """Factorized system and its right-hand-side builder."""
    from .weaker import WeakerSystem

    s = WeakerSystem(spec)
    return s, s.rhs


def assemble_stronger(spec: ProblemSpec):
    from .stronger import StrongerSystem

    s = StrongerSystem(spec)
    return s, s.rhs


def distance_rms(system: DDSystem, distance: np.ndarray) -> float:
    """Root mean square of the pointwise distance over the domain."""
    w = system.points.weights
    return float(np.sqrt(np.sum(w * distance ** 2) / np.sum(w)))


def field_rms(system: DDSystem, x: np.ndarray, scaling) -> float:
    """Root mean square of the scaled fields, the comparison scale for
    distances."""
    T, g, q = system.fields(x)
    w = system.points.weights
    total = scaling.S_g * np.sum(w * (g * g).sum(1)) + scaling.S_q * np.sum(w * (q * q).sum(1))
    if scaling.S_T is not None:
        total += scaling.S_T * np.sum(w * T * T)
    return float(np.sqrt(total / np.sum(w)))


def search_fields(system: DDSystem, x: np.ndarray, material) -> SearchResult:
    T, g, q = system.fields(x)
    return material.search(T if getattr(material, "has_temperature", False) else None, g, q)


def dd_iterate(system: DDSystem, material, init=Init.RANDOM, stop: StopCriteria = StopCriteria(),
               seed: int = 0, x0: np.ndarray | None = None) -> tuple[DDState, SolveReport]:
    """Alternate nearest-state search at the Gauss points and field solves.

    ``init`` is Init.ZERO (zero state at every Gauss point, then solve), Init.RANDOM
    (random dataset point at every Gauss point, then solve) or ignored when
    ``x0`` supplies starting fields.
    """
    t0 = time.perf_counter()
    solves0 = system.solves
    prev_ids = None
    if x0 is not None:
        x = np.array(x0, dtype=float)
    elif Init(init) is Init.RANDOM and hasattr(material, "random_assignment"):
        rng = np.random.default_rng(seed)
        first = material.random_assignment(system.n_gauss, rng)
        prev_ids = first.ids
        x = system.solve(first.g, first.q)
    else:
        z = np.zeros((system.n_gauss, 2))
        x = system.solve(z, z)

    history: list[float] = []
    iterations = 0
    converged, reason = False, "max_iter"
    scaling = material.scaling
    while True:
        res = search_fields(system, x, material)
        iterations += 1
        eps = distance_rms(system, res.distance)
        history.append(eps)
        if stop.same_assignment and prev_ids is not None and res.ids is not None \
                and np.array_equal(prev_ids, res.ids):
            converged, reason = True, "same_assignment"
            break
        if len(history) > 1:
            d_rms = field_rms(system, x, scaling)
            if abs(history[-1] - history[-2]) <= stop.tol_eps_rel * d_rms:
                converged, reason = True, "eps_change"
                break
        if iterations >= stop.max_iter:
            log.warning("data-driven iteration stopped at max_iter=%d (eps=%.4g)", stop.max_iter, eps)
            break
        x = system.solve(res.g, res.q)
        prev_ids = res.ids
    state = DDState(system, x, res, history, iterations, converged, reason)
    report = SolveReport(iterations, eps, time.perf_counter() - t0, iterations * system.n_gauss,
                         system.factorizations == 1 and system.solves - solves0 >= 1, converged, reason)
    return state, report
