"""Command-line front end: ``ddheat <command> [subcommand] <config>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from .adaptivity import Thresholds, adapt_loop
from .config import Config, ConfigError, default_config_text, substream_seed
from .femcore import SingularMatrixError
from .indicators import compute_indicators, error_norms, write_report
from .io import state_point_data, write_state_vtk, write_table, write_vtk
from .mesh import MeshError, generate_quarter_annulus, generate_quarter_brick, generate_structured_square, read_mesh
from .scenarios import EXPHAT_TAGS, ExpHat, annulus_problem, brick_problem
from .solvers.dd import Init, StopCriteria, build_system, dd_iterate
from .solvers.problem import Formulation, ProblemError
from .solvers.reference import NewtonError
from .uq import STAT_FIELDS, PerturbSpec, mcmc, summarize

log = logging.getLogger("ddheat")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
USAGE_ERRORS = (ConfigError, ds.DatasetError, ProblemError, MeshError, FileNotFoundError)
NUMERIC_ERRORS = (SingularMatrixError, NewtonError, FloatingPointError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------------
# building blocks from the configuration
# ----------------------------------------------------------------------
def make_mesh(cfg: Config, n: int | None = None, order: int | None = None):
    kind = cfg.get("mesh", "kind")
    order = cfg.get("problem", "order") if order is None else order
    if kind == "square":
        n = cfg.get("mesh", "n") if n is None else n
        return generate_structured_square(n, cfg.get("mesh", "bounds"), EXPHAT_TAGS, max(order, 0))
    if kind == "annulus":
        return generate_quarter_annulus(cfg.get("mesh", "r_in"), cfg.get("mesh", "r_out"),
                                        cfg.get("mesh", "resolution"), max(order, 0))
    if kind == "brick":
        return generate_quarter_brick(resolution=cfg.get("mesh", "resolution"), order=max(order, 0))
    return read_mesh(cfg.require("mesh", "path")).with_orders(max(order, 0))


def make_problem(cfg: Config, mesh, order=None):
    """Problem spec and, for the manufactured solution, the exact fields."""
    formulation = Formulation(cfg.get("problem", "formulation"))
    scenario = cfg.get("problem", "scenario")
    if scenario == "exphat":
        hat = ExpHat(cfg.get("problem", "k"))
        return hat.problem(mesh, formulation, order), hat
    T_in, T_out = cfg.get("problem", "T_in"), cfg.get("problem", "T_out")
    if scenario == "brick":
        return brick_problem(mesh, T_in, T_out, formulation, order), None
    return annulus_problem(mesh, T_in, T_out, formulation, order), None


def make_scaling(cfg: Config, required: bool = False) -> ds.Scaling | None:
    vals = {k: cfg.get("scaling", k) for k in ("S_T", "S_g", "S_q")}
    if vals["S_g"] is None and vals["S_q"] is None and vals["S_T"] is None:
        if required:
            raise ConfigError("[scaling] S_g and S_q are required here")
        return None
    if vals["S_g"] is None or vals["S_q"] is None:
        raise ConfigError("[scaling] needs both S_g and S_q when either is set")
    return ds.Scaling(vals["S_g"], vals["S_q"], vals["S_T"])


def make_material(cfg: Config, threads: int):
    if cfg.get("dataset", "source") == "line":
        return ds.LineOracle(cfg.get("problem", "k"), make_scaling(cfg) or ds.Scaling(1.0, 1.0))
    path = cfg.require("dataset", "path")
    data = ds.read_dataset(path, make_scaling(cfg))
    return replace(data, workers=threads)


def make_stop(cfg: Config) -> StopCriteria:
    return StopCriteria(cfg.get("dd", "tol"), cfg.get("dd", "max_iter"), cfg.get("dd", "same_assignment"))


def make_init(cfg: Config, material) -> tuple[Init, int]:
    init = Init(cfg.get("dd", "init"))
    if init is Init.RANDOM and isinstance(material, ds.MaterialDataset):
        return init, substream_seed(cfg.require("dd", "seed"), "init")
    return init, 0


def make_thresholds(cfg: Config) -> Thresholds:
    return Thresholds(*(cfg.get("thresholds", k) for k in ("c_p", "c_d", "c_s", "c_sa", "c_h", "n_rounds")))


def output_dir(cfg: Config) -> Path:
    out = Path(cfg.get("output", "dir"))
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_snapshot(out / "config.resolved.ini")
    return out


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------
def cmd_gen_dataset(kind: str, cfg: Config, threads: int) -> None:
    out = Path(cfg.require("dataset", "output"))
    scaling = make_scaling(cfg)
    if kind == "regular":
        data = ds.generate_regular(cfg.get("dataset", "A"), cfg.get("dataset", "count_G"),
                                   cfg.get("dataset", "k"), scaling)
    else:
        order = cfg.get("problem", "order")
        mesh = generate_quarter_annulus(cfg.get("mesh", "r_in"), cfg.get("mesh", "r_out"),
                                        cfg.get("mesh", "resolution"), order)
        data = ds.generate_artexp((cfg.get("dataset", "T_min"), cfg.get("dataset", "T_max")),
                                  cfg.get("dataset", "n_levels"), mesh, cfg.get("dataset", "k_coeffs"),
                                  order, scaling=scaling)
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.write_dataset(data, out)
    log.info("wrote %d points to %s", len(data), out)


def cmd_tweak_dataset(kind: str, cfg: Config, threads: int) -> None:
    data = ds.read_dataset(cfg.require("dataset", "path"), make_scaling(cfg))
    if kind == "remove-range":
        data = ds.remove_range(data, cfg.get("dataset", "dimension"),
                               (cfg.require("dataset", "lo"), cfg.require("dataset", "hi")))
    else:
        seed = substream_seed(cfg.require("dd", "seed"), "noise")
        data = ds.add_conditional_noise(data, cfg.get("dataset", "sigma"), cfg.get("dataset", "threshold"), seed)
    out = Path(cfg.require("dataset", "output"))
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.write_dataset(data, out)
    log.info("wrote %d points to %s", len(data), out)


def _error_row(state, exact):
    eT, _, eq = error_norms(state, exact)
    return float(np.sqrt(eT.sum())), float(np.sqrt(eq.sum()))


def cmd_solve(cfg: Config, threads: int) -> None:
    material = make_material(cfg, threads)
    init, seed = make_init(cfg, material)
    mesh = make_mesh(cfg)
    spec, exact = make_problem(cfg, mesh)
    out = output_dir(cfg)
    system = build_system(spec)
    state, rep = dd_iterate(system, material, init, make_stop(cfg), seed)
    log.info("%d iterations, eps=%.6e, %s (%.2fs)", rep.iterations, rep.eps, rep.reason, rep.wall_time)
    report = compute_indicators(state, material.scaling, cfg.get("thresholds", "c_d"), exact)
    write_report(report, spec.orders, out / "indicators.csv")
    header = ["cells", "dofs", "gauss_points", "iterations", "eps", "queries", "converged", "reason"]
    row = [mesh.n_cells, system.n, system.n_gauss, rep.iterations, rep.eps, rep.queries, rep.converged, rep.reason]
    if exact is not None:
        header += ["err_T", "err_q"]
        row += list(_error_row(state, exact))
    write_table(out / "solve_report.csv", header, [row])
    if cfg.get("output", "vtk"):
        write_state_vtk(out / "fields.vtk", system, state.x, cfg.get("output", "n_eval"))


def convergence_table(cfg: Config):
    """Rows (p, n, h, err_T, err_q) and least-squares slopes per order,
    always with the line oracle and a zero start."""
    hat = ExpHat(cfg.get("problem", "k"))
    formulation = Formulation(cfg.get("problem", "formulation"))
    oracle = ds.LineOracle(hat.k, make_scaling(cfg) or ds.Scaling(1.0, 1.0))
    stop = make_stop(cfg)
    x0, x1 = cfg.get("mesh", "bounds")[:2]
    rows, slopes = [], []
    for p in cfg.get("problem", "orders"):
        errs = []
        for n in cfg.get("mesh", "n_list"):
            mesh = generate_structured_square(n, cfg.get("mesh", "bounds"), EXPHAT_TAGS, max(p, 0))
            system = build_system(hat.problem(mesh, formulation, p))
            state, _ = dd_iterate(system, oracle, Init.ZERO, stop)
            eT, eq = _error_row(state, hat)
            h = (x1 - x0) / n
            errs.append((h, eT, eq))
            rows.append([p, n, h, eT, eq])
        e = np.array(errs)
        lh = np.log(e[:, 0])
        slopes.append([p, float(np.polyfit(lh, np.log(e[:, 1]), 1)[0]), float(np.polyfit(lh, np.log(e[:, 2]), 1)[0])])
    return rows, slopes


def cmd_study(kind: str, cfg: Config, threads: int) -> None:
    out = output_dir(cfg)
    rows, slopes = convergence_table(cfg)
    by_p = {s[0]: s for s in slopes}
    write_table(out / "convergence.csv", ["p", "n", "h", "err_T", "err_q", "slope_T", "slope_q"],
                [r + by_p[r[0]][1:] for r in rows])
    for p, sT, sq in slopes:
        log.info("p=%d: temperature slope %.3f, flux slope %.3f", p, sT, sq)


def _round_writer(out: Path, cfg: Config, summary: list):
    vtk, n_eval = cfg.get("output", "vtk"), cfg.get("output", "n_eval")

    def on_round(i, rnd):
        st, rep = rnd.state, rnd.report
        write_report(rep, rnd.orders, out / f"round_{i}_indicators.csv")
        if vtk:
            write_state_vtk(out / f"round_{i}_fields.vtk", st.system, st.x, n_eval,
                            {"mu": rep.mu, "d_ave": rep.d_ave, "ever_p_refined": rnd.ever_p_refined.astype(float)})
        marks = rnd.marks
        summary.append([i, rnd.mesh.n_cells, st.system.n, st.iterations, rep.mu_g, rep.eps_d, rep.d_rms,
                        int(rep.excluded.sum()), 0 if marks is None else len(marks.p_marks),
                        0 if marks is None else len(marks.h_marks), rnd.saturated])
        log.info("round %d: %d cells, mu_g=%.4e, eps_d=%.4e", i, rnd.mesh.n_cells, rep.mu_g, rep.eps_d)

    return on_round


SUMMARY_HEADER = ["round", "cells", "dofs", "dd_iterations", "mu_g", "eps_d", "d_rms", "excluded",
                  "p_marks", "h_marks", "p_saturated"]


def run_adapt(cfg: Config, threads: int, out: Path):
    material = make_material(cfg, threads)
    init, seed = make_init(cfg, material)
    mesh = make_mesh(cfg)
    spec, exact = make_problem(cfg, mesh)
    summary: list = []
    result = adapt_loop(spec, material, make_thresholds(cfg), init, seed, make_stop(cfg),
                        cfg.get("thresholds", "max_order"), exact, _round_writer(out, cfg, summary))
    write_table(out / "summary.csv", SUMMARY_HEADER, summary)
    return result, material


def cmd_adapt(cfg: Config, threads: int) -> None:
    run_adapt(cfg, threads, output_dir(cfg))


def cmd_mcmc(cfg: Config, threads: int) -> None:
    out = output_dir(cfg)
    seed = substream_seed(cfg.require("dd", "seed"), "perturbation")
    result, material = run_adapt(cfg, threads, out)
    state = result.final.state
    spec = PerturbSpec(cfg.get("mcmc", "kappa"), seed, cfg.get("mcmc", "n_iter"),
                       cfg.get("mcmc", "early_stop_tol"), cfg.get("mcmc", "n_eval"))
    stats = mcmc(state, material, spec, make_stop(cfg))
    per_cell = summarize(stats)
    mesh = state.system.mesh
    write_table(out / "mcmc_elements.csv", ["cell", "p"] + [f"std_{n}" for n in STAT_FIELDS],
                [[c, int(mesh.cell_order[c])] + [per_cell[n][c] for n in STAT_FIELDS] for c in range(mesh.n_cells)])
    write_table(out / "mcmc_manifest.csv", ["seed", "kappa", "n_iter", "iterations", "early_stopped", "failed"],
                [[spec.seed, spec.kappa, spec.n_iter, stats.iterations, stats.early_stopped, stats.failed]])
    if cfg.get("output", "vtk"):
        data = {f"mean_{n}": stats.mean(n) for n in STAT_FIELDS}
        data.update({f"std_{n}": stats.std(n) for n in STAT_FIELDS})
        write_vtk(out / "mcmc_stats.vtk", mesh, spec.n_eval, data, {"p": mesh.cell_order})
    if stats.failed:
        raise NumericalFailure(f"ensemble aborted after {stats.iterations} iterations: {stats.message}")


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ddheat", description="Data-driven steady heat conduction with mixed finite elements.")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="workers for the data search")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    g = sub.add_parser("gen-dataset", help="generate a material dataset")
    g.add_argument("kind", choices=("regular", "artexp"))
    g.add_argument("config")
    t = sub.add_parser("tweak-dataset", help="remove a range or add noise")
    t.add_argument("kind", choices=("remove-range", "add-noise"))
    t.add_argument("config")
    for name, text in (("solve", "single data-driven solve"), ("adapt", "adaptive hp rounds"),
                       ("mcmc", "adaptive rounds then perturb-and-resolve statistics")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config")
    st = sub.add_parser("study", help="convergence study on the manufactured solution")
    st.add_argument("kind", choices=("convergence",))
    st.add_argument("config")
    sub.add_parser("defaults", help="print a configuration template with all defaults")
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"ddheat: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "defaults":
        print(default_config_text())
        return EXIT_OK
    if args.threads < 1:
        print("ddheat: usage error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = Config.from_file(args.config)
        if args.command == "gen-dataset":
            cmd_gen_dataset(args.kind, cfg, args.threads)
        elif args.command == "tweak-dataset":
            cmd_tweak_dataset(args.kind, cfg, args.threads)
        elif args.command == "solve":
            cmd_solve(cfg, args.threads)
        elif args.command == "study":
            cmd_study(args.kind, cfg, args.threads)
        elif args.command == "adapt":
            cmd_adapt(cfg, args.threads)
        elif args.command == "mcmc":
            cmd_mcmc(cfg, args.threads)
    except USAGE_ERRORS as exc:
        print(f"ddheat: error in {args.command} ({args.config}): {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS + (NumericalFailure,) as exc:
        print(f"ddheat: numerical failure in {args.command} ({args.config}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
