import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddheat import dataset as ds
from ddheat.dataset import (DatasetError, LineOracle, MaterialDataset, Scaling, add_conditional_noise,
                            compute_scaling, conductivity, generate_artexp, generate_regular, line_projection,
                            nearest, read_dataset, remove_range, write_dataset)
from ddheat.mesh import generate_quarter_annulus


def random_dataset(rng, n, dim=4, scale=None):
    pts = rng.standard_normal((n, dim)) * (scale if scale is not None else rng.uniform(0.1, 10, dim))
    return MaterialDataset(pts, ds.compute_scaling_points(pts))


class TestRegular:
    def test_default_grid_corner(self):
        d = generate_regular(9.0, 41, 1.0)
        assert len(d) == 41 ** 2
        corner = np.flatnonzero((d.g[:, 0] == -9) & (d.g[:, 1] == -9))
        assert len(corner) == 1
        assert np.array_equal(d.q[corner[0]], [9.0, 9.0])

    def test_small(self):
        d = generate_regular(1.0, 2, 2.0)
        assert len(d) == 4
        i = np.flatnonzero((d.g == [1.0, 1.0]).all(1))[0]
        assert np.array_equal(d.q[i], [-2.0, -2.0])

    def test_on_line(self):
        d = generate_regular(3.0, 7, 1.7)
        assert np.array_equal(d.q + 1.7 * d.g, np.zeros_like(d.q))

    @pytest.mark.parametrize("args", [(9.0, 1, 1.0), (0.0, 5, 1.0), (1.0, 5, 0.0)])
    def test_rejects(self, args):
        with pytest.raises(DatasetError):
            generate_regular(*args)


@pytest.fixture(scope="module")
def mesh():
    return generate_quarter_annulus(0.02, 0.1, 0.02)


class TestArtexp:
    def test_size_and_law(self, mesh):
        d = generate_artexp((400.0, 1100.0), 3, mesh)
        n_gauss = len(d) // 9
        assert len(d) == 9 * n_gauss
        k = conductivity(d.T)
        resid = np.abs(d.q + k[:, None] * d.g).max()
        assert resid <= 1e-9 * np.abs(d.q).max()

    def test_uniform_temperature(self, mesh):
        d = generate_artexp((500.0, 500.0 + 1e-9), 2, mesh)
        assert np.abs(d.g).max() < 1e-3
        assert np.allclose(d.T, 500.0, atol=1e-6)

    def test_k_at_500(self):
        assert conductivity(500.0) == pytest.approx(89.5975, rel=1e-12)

    def test_rejects_one_level(self, mesh):
        with pytest.raises(DatasetError):
            generate_artexp((400.0, 1100.0), 1, mesh)


class TestTweaks:
    def test_remove_band(self):
        d = remove_range(generate_regular(9.0, 41, 1.0), "gx", (-6, -5))
        gx = d.g[:, 0]
        assert not ((gx >= -6) & (gx <= -5)).any()
        grid = np.linspace(-9, 9, 41)
        assert len(d) == 41 * np.sum((grid < -6) | (grid > -5))

    def test_remove_outside_is_identity(self):
        d = generate_regular(9.0, 11, 1.0)
        r = remove_range(d, "gx", (20, 30))
        assert np.array_equal(r.points, d.points)

    def test_remove_all_errors(self):
        with pytest.raises(DatasetError):
            remove_range(generate_regular(9.0, 11, 1.0), "gx", (-9, 9))

    def test_remove_commutes(self):
        d = generate_regular(9.0, 21, 1.0)
        a = remove_range(remove_range(d, "gx", (-6, -5)), "qy", (1, 3))
        b = remove_range(remove_range(d, "qy", (1, 3)), "gx", (-6, -5))
        assert np.array_equal(a.points, b.points)

    def test_noise_condition(self):
        g = np.array([[1e3, 0.0], [0.0, 3e3], [1.5e3, 1.5e3]])
        pts = np.column_stack([np.full(3, 500.0), g, -g])
        d = MaterialDataset(pts, Scaling(1.0, 1.0, 1.0))
        n = add_conditional_noise(d, 1e6, 2e3, seed=3)
        assert n.points[0, 4] != d.points[0, 4]
        assert np.array_equal(n.points[1], d.points[1])
        assert np.array_equal(n.points[2], d.points[2])
        assert np.array_equal(n.points[0, :4], d.points[0, :4])

    def test_noise_deterministic_and_zero(self):
        d = generate_regular(9.0, 11, 1.0)
        a = add_conditional_noise(d, 0.5, 5.0, seed=1)
        b = add_conditional_noise(d, 0.5, 5.0, seed=1)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(add_conditional_noise(d, 0.0, 5.0, seed=1).points, d.points)


class TestScaling:
    def test_variance_four(self, rng):
        g = rng.standard_normal((5000, 2))
        g = (g - g.mean()) / g.std() * 2.0
        pts = np.hstack([g, rng.standard_normal((5000, 2))])
        assert compute_scaling(MaterialDataset(pts, Scaling(1, 1))).S_g == pytest.approx(0.25)

    def test_zero_variance(self, rng):
        pts = np.hstack([rng.standard_normal((10, 2)), np.ones((10, 2))])
        with pytest.raises(DatasetError, match="variance"):
            ds.compute_scaling_points(pts)

    def test_unit_variance_after_scaling(self, rng):
        d = random_dataset(rng, 2000, 5)
        z = d.points * np.sqrt(d.scaling.weights(True))
        assert np.var(z[:, 0]) == pytest.approx(1.0)
        assert np.var(z[:, 1:3]) == pytest.approx(1.0)
        assert np.var(z[:, 3:5]) == pytest.approx(1.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(DatasetError):
            Scaling(0.0, 1.0)


class TestNearest:
    def test_two_points(self):
        d = MaterialDataset(np.array([[0, 0, 0, 0], [1, 1, -1, -1.0]]), Scaling(1.0, 1.0))
        row, dist = nearest(d, g=[0.9, 0.9], q=[-0.9, -0.9])
        assert np.array_equal(row, [1, 1, -1, -1])
        assert dist == pytest.approx(0.2)

    def test_exact_hit(self, rng):
        d = random_dataset(rng, 100)
        row, dist = nearest(d, g=d.g[17], q=d.q[17])
        assert dist == 0.0 and np.array_equal(row, d.points[17])

    @pytest.mark.parametrize("dim", [4, 5])
    def test_against_scan(self, rng, dim):
        d = random_dataset(rng, 3000, dim)
        Q = rng.standard_normal((1000, dim)) * np.std(d.points, axis=0) * 1.5
        T = Q[:, 0] if dim == 5 else None
        o = dim - 4
        a = d.search(T, Q[:, o:o + 2], Q[:, o + 2:])
        b = d.brute_force(T, Q[:, o:o + 2], Q[:, o + 2:])
        assert np.array_equal(a.ids, b.ids)
        assert np.allclose(a.distance, b.distance, rtol=1e-12)

    def test_ties_lowest_index(self):
        # eight copies of the same state: the lowest index must win
        pts = np.vstack([np.ones((8, 4)), np.zeros((3, 4))])
        d = MaterialDataset(pts[::-1].copy(), Scaling(1.0, 1.0))
        r = d.search(None, [[1.0, 1.0]], [[1.0, 1.0]])
        assert r.ids[0] == 3

    def test_reorder_invariant(self, rng):
        d = random_dataset(rng, 500)
        perm = rng.permutation(len(d))
        e = MaterialDataset(d.points[perm], d.scaling)
        Q = rng.standard_normal((200, 4))
        a = d.search(None, Q[:, :2], Q[:, 2:])
        b = e.search(None, Q[:, :2], Q[:, 2:])
        assert np.array_equal(d.points[a.ids], e.points[b.ids])

    def test_empty(self):
        d = MaterialDataset(np.zeros((0, 4)), Scaling(1.0, 1.0))
        with pytest.raises(DatasetError):
            d.search(None, [[0, 0]], [[0, 0]])

    def test_regular_converges_to_line(self, rng):
        d = generate_regular(2.0, 201, 1.0, Scaling(1.0, 1.0))
        g = rng.uniform(-1.5, 1.5, (100, 2))
        q = -g + rng.normal(0, 0.2, (100, 2))
        r = d.search(None, g, q)
        gs, qs, _ = line_projection(g, q, 1.0)
        assert np.abs(r.g - gs).max() <= 4.0 / 200


class TestLineProjection:
    def test_unit_point(self):
        gs, qs, dist = line_projection(1.0, 1.0, 1.0)
        assert (gs, qs) == (0.0, 0.0)
        # per component |q + k g| / sqrt(1 + k^2) = 2 / sqrt(2)
        assert dist == pytest.approx(np.sqrt(2.0))

    def test_on_line(self):
        gs, qs, dist = line_projection(2.0, -2.0, 1.0)
        assert (gs, qs, dist) == (2.0, -2.0, 0.0)

    def test_against_sampling(self):
        gs, qs, dist = line_projection(0.0, 1.0, 1.0)
        assert (gs, qs) == pytest.approx((-0.5, 0.5))
        t = np.linspace(-3, 3, 600001)
        dd = np.sqrt((0.0 - t) ** 2 + (1.0 + t) ** 2)
        assert dist == pytest.approx(dd.min(), abs=1e-6)
        assert t[np.argmin(dd)] == pytest.approx(gs, abs=1e-5)

    @given(st.floats(-100, 100), st.floats(-100, 100), st.floats(0.01, 50), st.floats(0.1, 10), st.floats(0.1, 10))
    def test_properties(self, g, q, k, S_g, S_q):
        gs, qs, dist = line_projection(g, q, k, S_g, S_q)
        assert qs == -k * gs
        # residual is orthogonal to the line direction (1, -k) in the weighted metric
        assert abs(S_g * (g - gs) - k * S_q * (q - qs)) <= 1e-12 * (1 + abs(g) + abs(q)) * (S_g + k * S_q)
        assert dist == pytest.approx(np.sqrt(S_g * (g - gs) ** 2 + S_q * (q - qs) ** 2))

    def test_oracle_matches_dense_grid_metric(self):
        o = LineOracle(2.0, Scaling(0.5, 3.0))
        r = o.search(None, np.array([[1.0, -1.0]]), np.array([[0.3, 0.7]]))
        assert r.ids is None
        assert np.allclose(r.q, -2.0 * r.g)


def test_csv_round_trip(tmp_path, rng):
    d = remove_range(random_dataset(rng, 50, 5), "T", (0.0, 0.1))
    write_dataset(d, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "T,gx,gy,qx,qy"
    r = read_dataset(tmp_path / "d.csv")
    assert np.array_equal(r.points, d.points)
    assert r.scaling == d.scaling
    assert r.provenance == d.provenance


def test_read_rejects_bad_header(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "x.csv")
