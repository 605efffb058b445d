from fractions import Fraction
from math import factorial

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from numpy.polynomial import legendre

from ddheat.femcore import (MAX_DEGREE, QuadratureError, SingularMatrixError, SpaceKind, apply_essential,
                            build_dofmap, edge_points, edge_rule, eval_basis, factor, gauss_points,
                            newton_cotes_lattice, quadrature_rule, resolve, tabulate)
from ddheat.femcore.basis import BasisError, reference_basis
from ddheat.mesh import Tag, generate_structured_square, refine
from ddheat.scenarios import EXPHAT_TAGS

H1, L2, HDIV = SpaceKind.H1_CONTINUOUS, SpaceKind.L2_DISCONTINUOUS, SpaceKind.HDIV_CONFORMING


def exact_monomial(a, b):
    """Integral of x^a y^b over the reference triangle."""
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


def poly_fit_residual(points, values, degree):
    cols = [points[:, 0] ** (d - j) * points[:, 1] ** j for d in range(degree + 1) for j in range(d + 1)]
    V = np.column_stack(cols)
    c, *_ = np.linalg.lstsq(V, values, rcond=None)
    return np.abs(V @ c - values).max()


def random_ref_points(n, seed=0):
    r = np.random.default_rng(seed).random((n, 2))
    flip = r.sum(1) > 1
    r[flip] = 1 - r[flip]
    return r


# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------
class TestQuadrature:
    def test_degree1_area(self):
        assert quadrature_rule(1).weights.sum() == pytest.approx(0.5, abs=1e-15)

    def test_x2y2(self):
        r = quadrature_rule(4)
        x, y = r.points.T
        assert r.weights @ (x * x * y * y) == pytest.approx(1 / 180, abs=1e-15)

    def test_degree0_centroid(self):
        r = quadrature_rule(0)
        assert len(r) == 1
        assert np.allclose(r.points[0], [1 / 3, 1 / 3])

    @pytest.mark.parametrize("degree", [0, 1, 2, 3, 5, 8, 12, 17, 24, MAX_DEGREE])
    def test_exactness(self, degree):
        r = quadrature_rule(degree)
        x, y = r.points.T
        for d in range(degree + 1):
            for b in range(d + 1):
                got = r.weights @ (x ** (d - b) * y ** b)
                assert abs(got - float(exact_monomial(d - b, b))) < 1e-13

    def test_points_inside(self):
        p = quadrature_rule(20).points
        assert (p >= 0).all() and (p.sum(1) <= 1).all()

    def test_too_high_names_maximum(self):
        with pytest.raises(QuadratureError, match=str(MAX_DEGREE)):
            quadrature_rule(MAX_DEGREE + 1)

    @pytest.mark.parametrize("degree", [0, 3, 9])
    def test_edge_rule(self, degree):
        s, w = edge_rule(degree)
        for k in range(degree + 1):
            assert w @ s ** k == pytest.approx(1 / (k + 1), abs=1e-14)


class TestLattice:
    @pytest.mark.parametrize("n, count", [(1, 3), (2, 6), (4, 15), (7, 36)])
    def test_counts(self, n, count):
        lat = newton_cotes_lattice(n)
        assert len(lat.points) == count == (n + 1) * (n + 2) // 2
        assert len(np.unique(np.round(lat.points * n).astype(int), axis=0)) == count
        assert (lat.points >= 0).all() and (lat.points.sum(1) <= 1 + 1e-15).all()

    def test_n2_vertices_and_midpoints(self):
        got = {tuple(p) for p in newton_cotes_lattice(2).points}
        assert got == {(0, 0), (0.5, 0), (1, 0), (0, 0.5), (0.5, 0.5), (0, 1)}


# ----------------------------------------------------------------------
# reference bases
# ----------------------------------------------------------------------
class TestBasis:
    def test_l2_order0_constant(self):
        t = eval_basis(L2, 0, random_ref_points(10))
        assert t["value"].shape == (1, 10)
        assert np.ptp(t["value"]) < 1e-14
        assert np.abs(t["grad"]).max() < 1e-14

    @pytest.mark.parametrize("order", [0, 1, 2, 3, 4])
    def test_l2_orthonormal(self, order):
        r = quadrature_rule(2 * order)
        v = eval_basis(L2, order, r.points)["value"]
        M = (v * r.weights) @ v.T
        assert np.abs(M - np.eye(len(M))).max() < 1e-12

    def test_h1_kronecker_and_partition(self):
        verts = np.array([[0, 0], [1, 0], [0, 1.0]])
        v = eval_basis(H1, 1, verts)["value"]
        assert np.allclose(v, np.eye(3), atol=1e-14)
        p = random_ref_points(20)
        assert np.allclose(eval_basis(H1, 1, p)["value"].sum(0), 1.0, atol=1e-14)

    @pytest.mark.parametrize("order", [2, 3, 4])
    def test_h1_higher_vanish_at_vertices(self, order):
        verts = np.array([[0, 0], [1, 0], [0, 1.0]])
        v = eval_basis(H1, order, verts)["value"]
        assert np.abs(v[3:]).max() < 1e-13

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_hdiv_divergence_degree(self, k):
        p = random_ref_points(80, k)
        div = eval_basis(HDIV, k, p)["div"]
        for row in div:
            assert poly_fit_residual(p, row, k - 1) < 1e-10

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_hdiv_counts_and_full_space(self, k):
        b = reference_basis(HDIV, k)
        assert b.size == (k + 1) * (k + 2)
        # the basis spans all vector polynomials of degree <= k
        p = random_ref_points(60, 7)
        val = eval_basis(HDIV, k, p)["value"]
        V = val.reshape(b.size, -1)
        assert np.linalg.matrix_rank(V, tol=1e-9) == (k + 1) * (k + 2)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_divergence_compatibility(self, k):
        # div of the order-k flux space projects onto L2 order k-1 with no residual
        r = quadrature_rule(2 * k + 2)
        div = eval_basis(HDIV, k, r.points)["div"]
        phi = eval_basis(L2, k - 1, r.points)["value"]
        proj = (div * r.weights) @ phi.T @ phi
        assert np.abs(proj - div).max() < 1e-12

    def test_unsupported_orders(self):
        with pytest.raises(BasisError):
            reference_basis(H1, 0)
        with pytest.raises(BasisError):
            reference_basis(HDIV, 0)
        with pytest.raises(BasisError):
            reference_basis(L2, -1)


# ----------------------------------------------------------------------
# dof maps
# ----------------------------------------------------------------------
def square(n, order=1):
    return generate_structured_square(n, (-0.5, 0.5, -0.5, 0.5), EXPHAT_TAGS, order)


class TestDofMap:
    def test_l2_order0(self):
        assert build_dofmap(square(2), L2, 0).n_dofs == 8

    def test_h1_order1(self):
        assert build_dofmap(square(2), H1, 1).n_dofs == 9

    def test_hdiv_order1_two_cells(self):
        dm = build_dofmap(square(1), HDIV, 1)
        # BDM1 has two normal moments per edge and no interior functions
        assert dm.n_dofs == 2 * 5
        shared = np.intersect1d(dm.cell_dofs(0), dm.cell_dofs(1))
        assert len(shared) == 2

    def test_l2_not_shared(self):
        dm = build_dofmap(square(3), L2, 2, components=2)
        all_dofs = np.concatenate([dm.cell_dofs(c) for c in range(dm.mesh.n_cells)])
        assert len(np.unique(all_dofs)) == len(all_dofs) == dm.n_dofs

    @pytest.mark.parametrize("kind", [H1, HDIV])
    @given(seed=st.integers(0, 10 ** 6))
    def test_conformity_mixed_orders(self, kind, seed):
        rng = np.random.default_rng(seed)
        mesh = square(3)
        mesh, _ = refine(mesh, rng.choice(mesh.n_cells, 3, replace=False))
        orders = rng.integers(1, 4, mesh.n_cells)
        dm = build_dofmap(mesh, kind, orders)
        x = rng.standard_normal(dm.n_dofs)
        edges = mesh.interior_edges
        a = edge_points(mesh, edges, 8, 0)
        b = edge_points(mesh, edges, 8, 1)
        ta, tb = tabulate(dm, a.cells, a.ref), tabulate(dm, b.cells, b.ref)
        if kind is HDIV:
            va = np.einsum("ij,ij->i", ta(x), a.normal)
            vb = -np.einsum("ij,ij->i", tb(x), b.normal)
        else:
            va, vb = ta(x), tb(x)
        assert np.allclose(a.xy, b.xy, atol=1e-14)
        assert np.abs(va - vb).max() <= 1e-10 * max(np.abs(va).max(), 1.0)


class TestEssential:
    def test_zero_flux(self):
        dm = build_dofmap(square(3), HDIV, 2)
        c = apply_essential(dm, {0: None, 2: None})
        assert len(c.constrained) == 6 * 3
        assert np.all(c.values == 0)
        assert np.intersect1d(c.constrained, c.free).size == 0

    @pytest.mark.parametrize("order", [2, 3])
    def test_linear_flux_reproduced(self, order):
        mesh = square(2)
        fn = lambda xy, n: 1.0 + 2.0 * xy[:, 0] - 0.5 * xy[:, 1]
        dm = apply_essential(build_dofmap(mesh, HDIV, order), {0: fn, 2: fn})
        edges = np.flatnonzero(mesh.edge_tag == int(Tag.NEUMANN_Q))
        ep = edge_points(mesh, edges, 6)
        qn = np.einsum("ij,ij->i", tabulate(dm, ep.cells, ep.ref)(dm.lift()), ep.normal)
        assert np.abs(qn - fn(ep.xy, ep.normal)).max() < 1e-12

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_constant_temperature(self, order):
        dm = apply_essential(build_dofmap(square(2), H1, order), {1: lambda xy, n: np.full(len(xy), 3.0),
                                                                  3: lambda xy, n: np.full(len(xy), 3.0)})
        vertex = dm.constrained < dm.mesh.n_vertices
        assert np.allclose(dm.values[vertex], 3.0)
        assert np.allclose(dm.values[~vertex], 0.0, atol=1e-13)

    def test_quadratic_temperature_reproduced(self):
        mesh = square(2)
        fn = lambda xy, n: xy[:, 1] ** 2 - xy[:, 0] * xy[:, 1]
        dm = apply_essential(build_dofmap(mesh, H1, 2), {1: fn, 3: fn})
        edges = np.flatnonzero(mesh.edge_tag == int(Tag.DIRICHLET_T))
        ep = edge_points(mesh, edges, 6)
        got = tabulate(dm, ep.cells, ep.ref)(dm.lift())
        assert np.abs(got - fn(ep.xy, None)).max() < 1e-12

    def test_missing_function(self):
        with pytest.raises(KeyError):
            apply_essential(build_dofmap(square(2), HDIV, 1), {0: None})


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
class TestFactor:
    def test_identity(self):
        f = factor(sp.identity(3))
        assert np.allclose(resolve(f, np.array([1.0, 0, 0])), [1, 0, 0])

    def test_saddle(self):
        f = factor(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]])))
        assert np.allclose(resolve(f, np.array([1.0, 0.0])), [0.0, 1.0])

    def test_singular_reports_pivot(self):
        A = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0.0]]))
        with pytest.raises(SingularMatrixError) as err:
            factor(A)
        assert err.value.pivot == 2

    def test_reuse_and_constraints(self, rng):
        n = 30
        B = rng.standard_normal((n, n))
        A = sp.csr_matrix(B @ B.T + n * np.eye(n))
        fixed = np.array([0, 7])
        f = factor(A, fixed)
        for _ in range(3):
            b = rng.standard_normal(n)
            vals = rng.standard_normal(2)
            x = f.solve(b, vals)
            assert np.allclose(x[fixed], vals)
            free = np.setdiff1d(np.arange(n), fixed)
            assert np.allclose((A @ x - b)[free], 0, atol=1e-10)
        assert f.solves == 3
