"""Perturb-and-resolve ensembles measuring how far the data-driven
solution is from unique."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .femcore import dof_length_scale, lattice_points, tabulate
from .femcore.spaces import PointSet
from .solvers.dd import DDState, StopCriteria, dd_iterate

log = logging.getLogger(__name__)

STAT_FIELDS = ("T", "gx", "gy", "qx", "qy", "g_mag", "q_mag")


@dataclass(frozen=True)
class PerturbSpec:
    """``kappa`` is the flux-coefficient standard deviation; the other
    fields get kappa * sqrt(S_q / S_field) so all perturbations have the
    same size in the scaled metric."""

    kappa: float
    seed: int = 0
    n_iter: int = 100
    early_stop_tol: float | None = 1e-3
    n_eval: int = 4
    store_samples: bool = False

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")


class RunningStats:
    """Welford accumulation of means and population variances."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self._m2 = np.zeros(shape)

    def update(self, sample: np.ndarray) -> None:
        self.count += 1
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (sample - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.mean)
        return np.maximum(self._m2 / self.count, 0.0)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass(eq=False)
class MCMCStats:
    lattice: PointSet
    stats: dict[str, RunningStats]
    iterations: int = 0
    early_stopped: bool = False
    failed: bool = False
    message: str = ""
    mean_std_history: list[float] = field(default_factory=list)
    samples: dict[str, list[np.ndarray]] | None = None
    dd_iterations: list[int] = field(default_factory=list)

    def mean(self, name: str) -> np.ndarray:
        return self.stats[name].mean

    def std(self, name: str) -> np.ndarray:
        return self.stats[name].std


def field_kappas(kappa: float, scaling) -> dict[str, float]:
    k = {"q": kappa, "g": kappa * np.sqrt(scaling.S_q / scaling.S_g)}
    # a 4D dataset leaves T out of the metric, so it is not perturbed
    k["T"] = kappa * np.sqrt(scaling.S_q / scaling.S_T) if scaling.S_T is not None else 0.0
    return k


def perturb(state: DDState, kappas: dict[str, float], rng: np.random.Generator) -> np.ndarray:
    """Independent Gaussian increments on every free coefficient of the
    T, g and q blocks present in the system; multipliers are left alone.

    Increments are in field units: flux moments are scaled by their
    length so a draw of size kappa moves the flux by about kappa.
    """
    x = state.x.copy()
    sysm = state.system
    for name in ("T", "g", "q"):
        if name not in sysm.blocks:
            continue
        block = sysm.blocks[name]
        free = block.dofmap.free
        k = kappas.get(name, 0.0)
        draw = rng.standard_normal(len(free))
        if k > 0:
            x[block.offset + free] += k * draw * dof_length_scale(block.dofmap)[free]
    return x


def _lattice_values(state: DDState, x: np.ndarray, lattice: PointSet, tabs) -> dict[str, np.ndarray]:
    sysm = state.system
    T = tabs["T"](sysm.block(x, "T"))
    if "g" in tabs:
        g = tabs["g"](sysm.block(x, "g"))
    else:
        g = tabs["T"].gradient(sysm.block(x, "T"))
    q = tabs["q"](sysm.block(x, "q"))
    return {"T": T, "gx": g[:, 0], "gy": g[:, 1], "qx": q[:, 0], "qy": q[:, 1],
            "g_mag": np.linalg.norm(g, axis=1), "q_mag": np.linalg.norm(q, axis=1)}


def mcmc(state: DDState, material, spec: PerturbSpec, stop: StopCriteria = StopCriteria()) -> MCMCStats:
    """Repeatedly perturb the converged fields and re-run the data-driven
    iteration on the frozen discretisation, accumulating field statistics
    on a regular lattice in every cell."""
    sysm = state.system
    lattice = lattice_points(sysm.mesh, spec.n_eval)
    tabs = {name: tabulate(b.dofmap, lattice.cells, lattice.ref)
            for name, b in sysm.blocks.items() if name in ("T", "g", "q")}
    stats = {name: RunningStats(len(lattice)) for name in STAT_FIELDS}
    out = MCMCStats(lattice, stats, samples={n: [] for n in STAT_FIELDS} if spec.store_samples else None)
    rng = np.random.default_rng(spec.seed)
    kappas = field_kappas(spec.kappa, material.scaling)
    current = state
    for it in range(spec.n_iter):
        x0 = perturb(current, kappas, rng)
        try:
            current, rep = dd_iterate(sysm, material, stop=stop, x0=x0)
        except Exception as exc:
            out.failed = True
            out.message = f"iteration {it}: {exc}"
            log.error("ensemble aborted: %s", out.message)
            break
        out.dd_iterations.append(rep.iterations)
        vals = _lattice_values(current, current.x, lattice, tabs)
        for name, v in vals.items():
            stats[name].update(v)
            if out.samples is not None:
                out.samples[name].append(v)
        out.iterations = it + 1
        mean_std = float(np.mean([stats[n].std.mean() for n in ("T", "gx", "gy", "qx", "qy")]))
        out.mean_std_history.append(mean_std)
        if spec.early_stop_tol is not None and len(out.mean_std_history) > 2:
            prev = out.mean_std_history[-2]
            if prev > 0 and abs(mean_std - prev) / prev < spec.early_stop_tol:
                out.early_stopped = True
                break
    return out


def summarize(stats: MCMCStats, mesh=None) -> dict[str, np.ndarray]:
    """Per-cell mean of the pointwise standard deviation of each field."""
    lat = stats.lattice
    counts = np.diff(lat.offsets)
    return {name: lat.per_cell(stats.std(name)) / counts for name in STAT_FIELDS}
