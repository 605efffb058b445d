import numpy as np
import pytest

from ddheat.dataset import LineOracle, Scaling
from ddheat.femcore import dof_length_scale
from ddheat.mesh import generate_structured_square
from ddheat.scenarios import EXPHAT_TAGS, ExpHat
from ddheat.solvers.dd import Init, StopCriteria, build_system, dd_iterate, field_rms
from ddheat.solvers.problem import Formulation
from ddheat.uq import STAT_FIELDS, MCMCStats, PerturbSpec, RunningStats, field_kappas, mcmc, perturb, summarize

TIGHT = StopCriteria(tol_eps_rel=1e-13, max_iter=300)


@pytest.fixture(scope="module")
def converged():
    hat = ExpHat()
    mesh = generate_structured_square(4, (-0.5, 0.5, -0.5, 0.5), EXPHAT_TAGS, 1)
    s = build_system(hat.problem(mesh, Formulation.DD_WEAKER, 1))
    oracle = LineOracle(1.0)
    st, _ = dd_iterate(s, oracle, Init.ZERO, TIGHT)
    return st, oracle


def test_spec_validation():
    with pytest.raises(ValueError):
        PerturbSpec(kappa=-1.0)
    with pytest.raises(ValueError):
        PerturbSpec(kappa=1.0, n_iter=0)


def test_field_kappas():
    k = field_kappas(2.0, Scaling(S_g=4.0, S_q=1.0, S_T=16.0))
    assert k == pytest.approx({"q": 2.0, "g": 1.0, "T": 0.5})
    assert field_kappas(2.0, Scaling(1.0, 1.0))["T"] == 0.0


class TestPerturb:
    def test_zero_kappa(self, converged, rng):
        st, _ = converged
        assert np.array_equal(perturb(st, {"T": 0.0, "g": 0.0, "q": 0.0}, rng), st.x)

    def test_deterministic(self, converged):
        st, _ = converged
        k = {"T": 1.0, "g": 1.0, "q": 1.0}
        a = perturb(st, k, np.random.default_rng(5))
        b = perturb(st, k, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_constrained_and_multipliers_untouched(self, converged, rng):
        st, _ = converged
        s = st.system
        x = perturb(st, {"T": 1.0, "g": 1.0, "q": 1.0}, rng)
        assert np.array_equal(x[s.fixed], st.x[s.fixed])
        for name in ("lambda", "tau"):
            assert np.array_equal(x[s.blocks[name].slice], st.x[s.blocks[name].slice])
        free_q = s.blocks["q"].offset + s.blocks["q"].dofmap.free
        assert (x[free_q] != st.x[free_q]).all()

    def test_draw_statistics(self, converged):
        st, _ = converged
        s = st.system
        block = s.blocks["T"]
        rng = np.random.default_rng(0)
        kappa = 1.0
        draws = np.array([(perturb(st, {"T": kappa}, rng) - st.x)[block.slice] for _ in range(10000)])
        scale = dof_length_scale(block.dofmap)
        draws = draws / scale
        assert np.abs(draws.mean(axis=0)).max() < 3 * kappa / 100 * 1.5
        assert np.abs(draws.mean()) < 3 * kappa / 100
        assert draws.std() == pytest.approx(kappa, rel=0.02)


class TestRunningStats:
    def test_single_sample(self):
        r = RunningStats(3)
        r.update(np.array([1.0, 2.0, 3.0]))
        assert np.array_equal(r.variance, np.zeros(3))

    def test_against_two_pass(self, rng):
        samples = rng.normal(1e3, 2.0, (200, 5))
        r = RunningStats(5)
        for s in samples:
            r.update(s)
        assert np.allclose(r.mean, samples.mean(0), rtol=1e-12)
        assert np.allclose(r.variance, samples.var(0), rtol=1e-10)
        assert (r.variance >= 0).all()


class TestMCMC:
    def test_single_iteration_zero_variance(self, converged):
        st, oracle = converged
        out = mcmc(st, oracle, PerturbSpec(kappa=0.5, n_iter=1, early_stop_tol=None), TIGHT)
        assert out.iterations == 1
        for name in STAT_FIELDS:
            assert np.array_equal(out.std(name), np.zeros(len(out.lattice)))

    def test_uniqueness_with_oracle(self, converged):
        st, oracle = converged
        out = mcmc(st, oracle, PerturbSpec(kappa=0.5, seed=2, n_iter=10, early_stop_tol=None), TIGHT)
        assert out.iterations == 10 and not out.failed
        rms = field_rms(st.system, st.x, oracle.scaling)
        for name in ("T", "gx", "gy", "qx", "qy"):
            assert out.std(name).max() < 1e-8 * rms

    def test_samples_match_running(self, converged):
        st, oracle = converged
        out = mcmc(st, oracle, PerturbSpec(kappa=0.5, seed=3, n_iter=5, early_stop_tol=None, store_samples=True),
                   StopCriteria(tol_eps_rel=1e-2, max_iter=3))
        for name in STAT_FIELDS:
            arr = np.array(out.samples[name])
            assert np.allclose(out.mean(name), arr.mean(0), rtol=1e-10, atol=1e-12)
            assert np.allclose(out.std(name) ** 2, arr.var(0), rtol=1e-10, atol=1e-20)

    def test_seeded_runs_identical(self, converged):
        st, oracle = converged
        spec = PerturbSpec(kappa=0.5, seed=9, n_iter=3, early_stop_tol=None)
        loose = StopCriteria(tol_eps_rel=1e-2, max_iter=2)
        a, b = mcmc(st, oracle, spec, loose), mcmc(st, oracle, spec, loose)
        for name in STAT_FIELDS:
            assert np.array_equal(a.std(name), b.std(name))

    def test_early_stop(self, converged):
        st, oracle = converged
        out = mcmc(st, oracle, PerturbSpec(kappa=0.5, seed=1, n_iter=50, early_stop_tol=1e6),
                   StopCriteria(tol_eps_rel=1e-2, max_iter=2))
        assert out.early_stopped and out.iterations == 3

    def test_failure_flagged(self, converged):
        st, _ = converged

        class Broken:
            scaling = Scaling(1.0, 1.0)

            def search(self, T, g, q):
                raise FloatingPointError("boom")

        out = mcmc(st, Broken(), PerturbSpec(kappa=0.5, n_iter=3))
        assert out.failed and "boom" in out.message and out.iterations == 0


def test_summarize():
    from ddheat.femcore import lattice_points
    mesh = generate_structured_square(2, (0, 1, 0, 1), EXPHAT_TAGS, 1)
    lat = lattice_points(mesh, 2)
    stats = {n: RunningStats(len(lat)) for n in STAT_FIELDS}
    out = MCMCStats(lat, stats)
    for v in (0.0, 2.0):
        for n in STAT_FIELDS:
            stats[n].update(np.full(len(lat), v))
    per_cell = summarize(out)
    for n in STAT_FIELDS:
        assert np.allclose(per_cell[n], 1.0) and len(per_cell[n]) == mesh.n_cells
    empty = summarize(MCMCStats(lat, {n: RunningStats(len(lat)) for n in STAT_FIELDS}))
    assert all(np.array_equal(v, np.zeros(mesh.n_cells)) for v in empty.values())
