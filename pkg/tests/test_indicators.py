import logging

import numpy as np
import pytest

from ddheat.dataset import LineOracle, MaterialDataset, Scaling
from ddheat.indicators import (bounded_average, compute_indicators, distance_stats, element_field_rms,
                               estimator, global_estimator, jump_indicators, plain_average, total_error,
                               write_report)
from ddheat.io import read_table
from ddheat.mesh import Mesh, Tag, generate_structured_square
from ddheat.scenarios import EXPHAT_TAGS, ExpHat, constant
from ddheat.solvers.dd import Init, StopCriteria, build_system, dd_iterate, field_rms
from ddheat.solvers.problem import Formulation, ProblemSpec

ALL_T = {s: Tag.DIRICHLET_T for s in ("bottom", "right", "top", "left")}


def make_mesh(vertices, cells, boundary, order):
    nb = len(boundary)
    return Mesh(np.array(vertices, dtype=float), np.array(cells), np.array(boundary), np.zeros(nb, dtype=int),
                np.zeros(nb, dtype=int), np.full(len(cells), order), np.zeros(len(cells), dtype=int))


def solved_hat(n, p=1, formulation=Formulation.DD_WEAKER):
    hat = ExpHat()
    mesh = generate_structured_square(n, (-0.5, 0.5, -0.5, 0.5), EXPHAT_TAGS, p)
    s = build_system(hat.problem(mesh, formulation, p))
    st, _ = dd_iterate(s, LineOracle(1.0), Init.ZERO, StopCriteria(tol_eps_rel=1e-12, max_iter=200))
    return st, hat


class Linear:
    """T = 1 + 2x - 3y with k = 1."""

    @staticmethod
    def T(xy, n=None):
        return 1.0 + 2.0 * xy[:, 0] - 3.0 * xy[:, 1]

    @staticmethod
    def g(xy):
        return np.tile([2.0, -3.0], (len(xy), 1))

    @staticmethod
    def q(xy):
        return np.tile([-2.0, 3.0], (len(xy), 1))


def linear_state(formulation=Formulation.DD_WEAKER, p=1):
    mesh = generate_structured_square(3, (0, 1, 0, 1), ALL_T, p)
    spec = ProblemSpec(mesh, formulation, p, dirichlet={s: Linear.T for s in range(4)})
    st, _ = dd_iterate(build_system(spec), LineOracle(1.0), Init.ZERO, StopCriteria(tol_eps_rel=1e-14))
    return st


# ----------------------------------------------------------------------
# elementary combinations
# ----------------------------------------------------------------------
def test_estimator_pythagorean():
    assert estimator([3.0], [4.0], [0.0])[0] == pytest.approx(5.0)
    assert estimator([0.0], [0.0], [0.0])[0] == 0.0


def test_global_single_element():
    assert global_estimator([3.0], [4.0], []) == pytest.approx(estimator([3.0], [4.0], [0.0])[0])


def test_averages():
    mu = np.array([2.0, 2.0, 2.0, 2.0])
    near = np.zeros(4)
    assert bounded_average(mu, near, 4.0, 1.0) == plain_average(mu) == 2.0
    assert bounded_average(mu, np.full(4, 10.0), 4.0, 1.0) == 0.0
    assert bounded_average(mu, np.array([0.0, 0.0, 10.0, 10.0]), 4.0, 1.0) == pytest.approx(1.0)
    # a vanishing comparison scale skips the exclusion
    assert bounded_average(mu, np.full(4, 10.0), 4.0, 0.0) == 2.0


def test_distance_stats():
    ave, std = distance_stats(np.array([0.3, 0.3, 0.3, 0.0, 2.0]), np.array([0, 3, 5]))
    assert np.allclose(ave, [0.3, 1.0])
    assert np.allclose(std, [0.0, 1.0])


# ----------------------------------------------------------------------
# indicators on solved states
# ----------------------------------------------------------------------
def test_exact_linear_solution():
    st = linear_state()
    rep = compute_indicators(st, Scaling(1.0, 1.0), exact=Linear)
    assert np.abs(rep.e_tot).max() < 1e-10
    assert np.abs(rep.eta).max() < 1e-20
    assert np.abs(rep.gamma).max() < 1e-10
    assert np.abs(rep.d_ave).max() < 1e-10


def test_flux_offset_total_error():
    st = linear_state()
    c = np.array([0.3, -0.4])

    class Shifted(Linear):
        @staticmethod
        def q(xy):
            return Linear.q(xy) + c

    area = np.abs(st.system.mesh.signed_areas)
    e = total_error(st, Shifted)
    assert np.allclose(e, 0.5 * np.sqrt(area), rtol=1e-8)


def test_divergence_indicator_unit_case():
    # one unit-area element: f = 1, q = 0 gives nu = h * 1
    v = np.array([[0.0, 0.0], [np.sqrt(2.0), 0.0], [0.0, np.sqrt(2.0)]])
    m = make_mesh(v, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], 0)
    spec = ProblemSpec(m, Formulation.DD_WEAKER, 0, source=lambda xy: np.ones(len(xy)),
                       dirichlet={0: constant(0.0)})
    s = build_system(spec)
    st, _ = dd_iterate(s, LineOracle(1.0), Init.ZERO)
    st.x[s.blocks["q"].slice] = 0.0
    rep = compute_indicators(st, Scaling(1.0, 1.0))
    assert rep.nu[0] == pytest.approx(m.element_sizes()[0])


def test_unit_jump():
    # two cells sharing the unit edge x = 0; T = 0 on the left, 1 on the right
    m = make_mesh([[-1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [[0, 1, 2], [1, 3, 2]],
                  [[0, 1], [2, 0], [1, 3], [3, 2]], 0)
    spec = ProblemSpec(m, Formulation.DD_WEAKER, 0, dirichlet={0: constant(0.0)})
    s = build_system(spec)
    st, _ = dd_iterate(s, LineOracle(1.0), Init.ZERO)
    bT = s.blocks["T"]
    x = st.x.copy()
    # the orthonormal constant mode is sqrt(2) per unit reference area
    x[bT.slice] = np.array([0.0, 1.0]) / np.sqrt(2.0)
    st.x[:] = x
    edges, gl = jump_indicators(st)
    h = m.element_sizes().mean()
    assert gl[0] == pytest.approx(1.0 / np.sqrt(h))


def test_estimator_invariants():
    st, hat = solved_hat(4, 2)
    rep = compute_indicators(st, Scaling(1.0, 1.0), exact=hat)
    assert (rep.mu >= np.maximum.reduce([rep.eta, rep.nu, rep.gamma]) - 1e-15).all()
    assert np.allclose(rep.mu ** 2, rep.eta ** 2 + rep.nu ** 2 + rep.gamma ** 2, rtol=1e-12)
    for a in (rep.eta, rep.nu, rep.gamma, rep.d_ave, rep.d_std, rep.e_tot):
        assert (a >= 0).all()
    boundary = np.setdiff1d(np.arange(st.system.mesh.n_edges), rep.edges)
    assert len(np.intersect1d(boundary, rep.edges)) == 0


def test_global_estimator_decreases():
    mus = [compute_indicators(solved_hat(n)[0], Scaling(1.0, 1.0)).mu_g for n in (4, 8, 16)]
    assert mus[0] > mus[1] > mus[2]


def test_conservation_indicator_small():
    mesh = generate_structured_square(3, (0, 1, 0, 1), ALL_T, 1)
    f = lambda xy: 1.0 + xy[:, 0]
    spec = ProblemSpec(mesh, Formulation.DD_WEAKER, 1, source=f, dirichlet={s: constant(0.0) for s in range(4)})
    st, _ = dd_iterate(build_system(spec), LineOracle(1.0), Init.ZERO)
    assert compute_indicators(st, Scaling(1.0, 1.0)).nu.max() <= 1e-9


def test_field_rms_cases(caplog):
    mesh = generate_structured_square(2, (0, 1, 0, 1), ALL_T, 1)
    spec = ProblemSpec(mesh, Formulation.DD_STRONGER, 1, dirichlet={s: constant(1.0) for s in range(4)})
    s = build_system(spec)
    st, _ = dd_iterate(s, LineOracle(1.0), Init.ZERO)
    assert field_rms(s, st.x, Scaling(1.0, 1.0, S_T=1.0)) == pytest.approx(1.0)
    assert np.allclose(element_field_rms(st, Scaling(1.0, 1.0, S_T=1.0)), 1.0)

    zero = ProblemSpec(mesh, Formulation.DD_STRONGER, 1, dirichlet={s: constant(0.0) for s in range(4)})
    st0, _ = dd_iterate(build_system(zero), LineOracle(1.0), Init.ZERO)
    with caplog.at_level(logging.WARNING):
        rep = compute_indicators(st0, Scaling(1.0, 1.0))
    assert rep.d_rms == 0.0 and "vanish" in caplog.text
    assert not rep.excluded.any()


def test_scaled_rms_dimensionless(rng):
    # scaling the data by a factor and the weights by its inverse square leaves d_RMS unchanged
    st, _ = solved_hat(3)
    a = field_rms(st.system, st.x, Scaling(1.0, 1.0))
    b = field_rms(st.system, st.x * 1e3, Scaling(1e-6, 1e-6))
    assert a == pytest.approx(b, rel=1e-12)


def test_distance_invariant_under_reordering(rng):
    st, hat = solved_hat(3)
    s = st.system
    pts = rng.uniform(-3, 3, (400, 4))
    data = MaterialDataset(pts, Scaling(1.0, 1.0))
    a, _ = dd_iterate(s, data, Init.ZERO, StopCriteria(max_iter=5))
    perm = rng.permutation(len(pts))
    b, _ = dd_iterate(s, MaterialDataset(pts[perm], Scaling(1.0, 1.0)), Init.ZERO, StopCriteria(max_iter=5))
    ra, rb = compute_indicators(a, data.scaling), compute_indicators(b, data.scaling)
    assert np.allclose(ra.d_ave, rb.d_ave) and np.allclose(ra.d_std, rb.d_std)
    far = np.vstack([pts, np.full((10, 4), 1e3)])
    c, _ = dd_iterate(s, MaterialDataset(far, Scaling(1.0, 1.0)), Init.ZERO, StopCriteria(max_iter=5))
    assert np.allclose(compute_indicators(c, data.scaling).d_ave, ra.d_ave)


def test_write_report(tmp_path):
    st, hat = solved_hat(2)
    rep = compute_indicators(st, Scaling(1.0, 1.0), exact=hat)
    path = tmp_path / "ind.csv"
    write_report(rep, st.system.mesh.cell_order, path)
    head, rows = read_table(path)
    assert head == ["cell", "p", "eta", "nu", "gamma", "mu", "d_ave", "d_std", "e_tot"]
    n = st.system.mesh.n_cells
    assert len(rows) == n + 3
    assert rows[n + 1][0] == "mu_g"
    assert float(rows[n + 2][0]) == pytest.approx(rep.mu_g, rel=1e-9)
