import numpy as np
import pytest

from oneshot_recovery.estimators import (
    EstimatorError,
    EstimatorSpec,
    bipg,
    csgm,
    lasso_ista,
    lasso_objective,
    one_shot,
    pgd,
    run_estimator,
    soft_threshold,
)
from oneshot_recovery.generators import LinearGenerator, orthonormal_linear, random_mlp
from oneshot_recovery.observation import MeasurementEnsemble, ObservationModel, sample_ensemble
from oneshot_recovery.projection import ProjectionConfig
from oneshot_recovery.seeding import derive_seed, make_rng

EXACT = ProjectionConfig(method="exact_linear")


def _planted(gen, seed, scale=0.5):
    z0 = make_rng(seed).standard_normal(gen.k)
    z0 *= scale * gen.radius / np.linalg.norm(z0)
    w = gen.forward(z0)
    return w / np.linalg.norm(w), z0


class TestOneShot:
    def test_full_space_is_back_projection(self):
        n = 12
        gen = LinearGenerator.from_matrix(np.eye(n), 1e6)
        ens = sample_ensemble(np.eye(n)[0], 40, ObservationModel("noisy_cubic", 1.0), 3)
        res = one_shot(ens, gen, EXACT)
        np.testing.assert_allclose(res.estimate, ens.A.T @ ens.y / ens.m, rtol=1e-12, atol=1e-14)
        assert res.projection_calls == 1

    def test_law_of_large_numbers(self):
        gen = orthonormal_linear(100, 5, 10.0, seed=4)
        x, _ = _planted(gen, 5)
        ens = sample_ensemble(x, 100_000, ObservationModel("identity"), 6)
        res = one_shot(ens, gen, EXACT)
        assert np.linalg.norm(res.estimate - x) <= 0.05

    def test_dimension_mismatch(self):
        gen = orthonormal_linear(10, 2, 1.0, 0)
        ens = sample_ensemble(np.eye(8)[0], 5, ObservationModel("identity"), 0)
        with pytest.raises(EstimatorError):
            one_shot(ens, gen, EXACT)


class TestIterative:
    @pytest.mark.parametrize("cfg", [EXACT, ProjectionConfig(restart_seed=9)])
    def test_bipg_first_iterate_is_one_shot(self, cfg):
        gen = orthonormal_linear(60, 4, 2.0, 1)
        x, _ = _planted(gen, 2)
        ens = sample_ensemble(x, 80, ObservationModel("noisy_one_bit", 0.3), 7)
        first = bipg(ens, gen, EstimatorSpec("bipg", cfg, iterations=1))
        assert np.max(np.abs(first.estimate - one_shot(ens, gen, cfg).estimate)) <= 1e-12

    def test_pgd_first_iterate_is_one_shot(self):
        gen = orthonormal_linear(60, 4, 10.0, 1)
        x, _ = _planted(gen, 2)
        ens = sample_ensemble(x, 80, ObservationModel("noisy_cubic", 1.0), 7)
        first = pgd(ens, gen, EstimatorSpec("pgd", EXACT, iterations=1))
        assert np.max(np.abs(first.estimate - one_shot(ens, gen, EXACT).estimate)) <= 1e-12

    def test_default_iterations(self):
        assert EstimatorSpec("bipg").iterations == 30
        assert EstimatorSpec("bipg").resolved_step(200) == pytest.approx(1 / 200)

    def test_bipg_fixed_point(self):
        # every sign is reproduced after the first step, so later residuals vanish
        gen = LinearGenerator.from_matrix(np.array([[1.0], [0.0]]), 0.5)
        A = np.abs(make_rng(3).standard_normal((15, 2))) + 0.1
        A[:, 1] = make_rng(4).standard_normal(15)
        x = np.array([1.0, 0.0])
        ens = MeasurementEnsemble(x, A, np.sign(A @ x), 0, ObservationModel("noisy_one_bit"))
        res = bipg(ens, gen, EstimatorSpec("bipg", EXACT, iterations=5))
        first = bipg(ens, gen, EstimatorSpec("bipg", EXACT, iterations=1))
        np.testing.assert_array_equal(np.sign(A @ first.estimate), ens.y)
        np.testing.assert_array_equal(res.estimate, first.estimate)
        assert res.iterate_history[1:] == [0.0] * 4

    def test_bipg_rejects_real_observations(self):
        gen = orthonormal_linear(10, 2, 1.0, 0)
        ens = sample_ensemble(np.eye(10)[0], 5, ObservationModel("identity"), 0)
        with pytest.raises(EstimatorError):
            bipg(ens, gen)

    def test_pgd_residual_non_increasing(self):
        n = 8
        gen = LinearGenerator.from_matrix(np.eye(n), 1e6)
        ens = sample_ensemble(np.eye(n)[1], 40, ObservationModel("identity", 0.5), 11)
        step = 1.0 / np.linalg.norm(ens.A, 2) ** 2
        res = pgd(ens, gen, EstimatorSpec("pgd", EXACT, iterations=200, step_size=step))
        history = np.array(res.iterate_history)
        assert np.all(np.diff(history) <= 1e-12)
        lstsq = np.linalg.lstsq(ens.A, ens.y, rcond=None)[0]
        assert np.linalg.norm(res.estimate - lstsq) < np.linalg.norm(lstsq)

    def test_zero_iterations_rejected(self):
        with pytest.raises(EstimatorError):
            EstimatorSpec("pgd", iterations=0)

    def test_history_tracks_error_to_target(self):
        gen = orthonormal_linear(30, 3, 5.0, 3)
        x, _ = _planted(gen, 4)
        ens = sample_ensemble(x, 60, ObservationModel("noisy_cubic", 0.5), 5)
        res = pgd(ens, gen, EstimatorSpec("pgd", EXACT, iterations=3), truth_scale=3.0)
        assert res.iterate_history[-1] == pytest.approx(np.linalg.norm(res.estimate - 3.0 * x))


class TestCsgm:
    def test_planted_linear_noiseless(self):
        gen = orthonormal_linear(40, 3, 3.0, 5)
        _, z0 = _planted(gen, 6)
        w = gen.forward(z0)
        A = make_rng(7).standard_normal((120, 40))
        ens = MeasurementEnsemble(w / np.linalg.norm(w), A, A @ w, 0, ObservationModel("identity"))
        res = csgm(ens, gen, EstimatorSpec("csgm", ProjectionConfig(steps=300, learning_rate=0.05)))
        assert min(res.iterate_history) <= 1e-6
        np.testing.assert_allclose(res.estimate, w, atol=1e-3)

    def test_deterministic(self):
        gen = random_mlp([3, 10, 12], seed=1)
        x, _ = _planted(gen, 2)
        ens = sample_ensemble(x, 30, ObservationModel("noisy_cubic", 1.0), 3)
        spec = EstimatorSpec("csgm", ProjectionConfig(restart_seed=5, steps=20))
        np.testing.assert_array_equal(csgm(ens, gen, spec).estimate, csgm(ens, gen, spec).estimate)


class TestLasso:
    def test_soft_threshold(self):
        np.testing.assert_array_equal(soft_threshold(np.array([-3.0, 0.5, 2.0]), 1.0), [-2.0, 0.0, 1.0])

    def test_overdetermined_recovers_signal(self):
        n = 10
        x = np.eye(n)[3]
        ens = sample_ensemble(x, 40, ObservationModel("identity"), 2)
        res = lasso_ista(ens, EstimatorSpec("lasso_ista", shrinkage=0.0, ista_iters=5000))
        assert np.linalg.norm(ens.A @ res.estimate - ens.y) <= 1e-6
        np.testing.assert_allclose(res.estimate, x, atol=1e-6)

    def test_huge_shrinkage_gives_zero(self):
        ens = sample_ensemble(np.eye(6)[0], 20, ObservationModel("noisy_cubic", 1.0), 1)
        res = lasso_ista(ens, EstimatorSpec("lasso_ista", shrinkage=1e6, ista_iters=10))
        np.testing.assert_array_equal(res.estimate, 0.0)

    def test_objective_monotone(self):
        ens = sample_ensemble(np.eye(30)[0], 20, ObservationModel("noisy_one_bit", 0.5), 8)
        res = lasso_ista(ens, EstimatorSpec("lasso_ista", shrinkage=0.05, ista_iters=300))
        history = np.array(res.iterate_history)
        assert np.all(np.diff(history) <= 1e-12 * np.abs(history[:-1]))
        assert history[-1] == pytest.approx(lasso_objective(ens.A, ens.y, res.estimate, 0.05))

    def test_negative_shrinkage_rejected(self):
        with pytest.raises(EstimatorError):
            EstimatorSpec("lasso_ista", shrinkage=-1.0)


class TestDispatch:
    @pytest.mark.parametrize("kind", ["one_shot", "bipg", "pgd", "csgm", "lasso_ista"])
    def test_every_kind_runs(self, kind):
        gen = orthonormal_linear(20, 2, 3.0, 0)
        x, _ = _planted(gen, 1)
        ens = sample_ensemble(x, 25, ObservationModel("noisy_one_bit", 0.2), derive_seed(0, 1))
        proj = EXACT if kind != "csgm" else ProjectionConfig(steps=10)
        res = run_estimator(EstimatorSpec(kind, proj, iterations=3, ista_iters=20), ens, gen)
        assert res.estimate.shape == (20,)
        assert np.all(np.isfinite(res.estimate))

    def test_unknown_kind(self):
        with pytest.raises(EstimatorError):
            EstimatorSpec("gd")
