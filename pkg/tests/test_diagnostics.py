import math

import numpy as np
import pytest

from oneshot_recovery.diagnostics import (
    DiagnosticsError,
    binomial_se,
    corollary_noise_curve,
    event_E_frequency,
    mu_hat_concentration,
    orthogonal_projector,
    orthogonal_tail,
    theoretical_rate,
)
from oneshot_recovery.estimators import one_shot
from oneshot_recovery.generators import orthonormal_linear
from oneshot_recovery.observation import ObservationModel, sample_ensemble
from oneshot_recovery.projection import ProjectionConfig
from oneshot_recovery.seeding import derive_seed, make_rng


def _unit(n, seed):
    x = make_rng(seed).standard_normal(n)
    return x / np.linalg.norm(x)


class TestEventE:
    def test_one_bit_always_holds(self):
        res = event_E_frequency(ObservationModel("noisy_one_bit", 0.5), _unit(10, 0), 50, 40, seed=1)
        assert res.frequency == 1.0 and res.bound == 1.0 and res.passed

    def test_cubic_bound_value(self):
        res = event_E_frequency(ObservationModel("noisy_cubic", 1.0), _unit(10, 1), 200, 100, seed=2)
        assert res.bound == pytest.approx(1 - 10232 / (200 * 256))

    def test_identity_check(self):
        res = event_E_frequency(ObservationModel("identity"), _unit(10, 2), 50, 300, seed=3)
        assert res.bound == pytest.approx(0.96)
        assert res.passed

    def test_too_few_trials(self):
        with pytest.raises(DiagnosticsError):
            event_E_frequency(ObservationModel("identity"), _unit(4, 0), 10, 5, seed=0)


class TestMuHat:
    def test_identity_bound(self):
        res = mu_hat_concentration(ObservationModel("identity"), _unit(10, 3), 100, 1.0, 300, seed=4)
        assert res.bound == pytest.approx(0.02)
        assert res.passed

    def test_huge_threshold(self):
        res = mu_hat_concentration(ObservationModel("noisy_cubic", 1.0), _unit(10, 3), 50, 1e9, 50, seed=4)
        assert res.frequency == 0.0

    def test_cubic_bound_value(self):
        res = mu_hat_concentration(ObservationModel("noisy_cubic", 1.0), _unit(10, 3), 400, 2.0, 200, seed=5)
        assert res.bound == pytest.approx(97 / 1600)
        assert res.passed


class TestOrthogonalTail:
    def test_probe_along_signal(self):
        x = _unit(12, 4)
        res = orthogonal_tail(ObservationModel("noisy_one_bit"), x, 3.0 * x, 40, 4.0, 50, seed=6)
        assert res.tail_frequency == 0.0
        np.testing.assert_allclose(res.statistics, 0.0, atol=1e-12)

    def test_orthogonal_unit_probe(self):
        n, m = 30, 100
        x = _unit(n, 5)
        s = orthogonal_projector(x) @ make_rng(6).standard_normal(n)
        s /= np.linalg.norm(s)
        res = orthogonal_tail(ObservationModel("noisy_one_bit"), x, s, m, 4.0, 1000, seed=7)
        assert res.threshold == pytest.approx(2.0 / math.sqrt(m))
        # y^2 = 1 for signs, so the conditional law is exactly N(0, 1/m)
        assert res.gaussian_prediction == pytest.approx(2 * (1 - 0.9772498680518208), rel=1e-9)
        assert abs(res.tail_frequency - res.gaussian_prediction) <= 3 * res.stderr

    def test_scale_equivariance(self):
        x = _unit(10, 8)
        s = make_rng(9).standard_normal(10)
        model = ObservationModel("noisy_cubic", 1.0)
        a = orthogonal_tail(model, x, s, 50, 2.0, 40, seed=10)
        b = orthogonal_tail(model, x, 2.0 * s, 50, 2.0, 40, seed=10)
        np.testing.assert_allclose(b.statistics, 2.0 * a.statistics, rtol=1e-12)

    def test_projector(self):
        x = _unit(5, 1)
        P = orthogonal_projector(x)
        np.testing.assert_allclose(P @ x, 0.0, atol=1e-15)
        np.testing.assert_allclose(P @ P, P, atol=1e-15)


class TestNoiseCurve:
    def setup_method(self):
        self.gen = orthonormal_linear(40, 3, 3.0, 11)
        z = np.array([0.3, -0.4, 0.2])
        self.x = self.gen.forward(z) / np.linalg.norm(self.gen.forward(z))
        self.model = ObservationModel("noisy_one_bit", 0.5)

    def test_zero_budget_row_matches_clean_run(self):
        cfg = ProjectionConfig(method="exact_linear")
        curve = corollary_noise_curve(self.model, self.gen, self.x, 60, [0.0, 0.2, 0.4], 30, seed=12, cfg=cfg)
        mu = math.sqrt(2 / (math.pi * 1.25))
        clean = [
            np.linalg.norm(one_shot(sample_ensemble(self.x, 60, self.model, derive_seed(12, 0, j)), self.gen, cfg)
                           .estimate - mu * self.x)
            for j in range(30)
        ]
        np.testing.assert_allclose(curve.errors[:, 0], clean, rtol=1e-12)

    def test_mean_error_increases(self):
        curve = corollary_noise_curve(self.model, self.gen, self.x, 100, [0.0, 0.25, 0.5, 0.75], 60, seed=13)
        assert curve.inversions <= 1
        assert curve.linear_coefficient > 0
        fitted = curve.mean_error[0] + curve.linear_coefficient * curve.nu
        # a straight line through the means leaves residuals of the order of the standard errors
        assert np.max(np.abs(curve.mean_error - fitted)) <= 0.1 * curve.mean_error[-1]

    def test_grid_validation(self):
        with pytest.raises(DiagnosticsError):
            corollary_noise_curve(self.model, self.gen, self.x, 10, [0.0, 0.1], 30, seed=0)
        with pytest.raises(DiagnosticsError):
            corollary_noise_curve(self.model, self.gen, self.x, 10, [0.2, 0.1, 0.3], 30, seed=0)


def test_binomial_se():
    assert binomial_se(0.5, 100) == pytest.approx(0.05)
    assert binomial_se(1.0, 10) == 0.0


def test_theoretical_rate_scaling():
    rates = theoretical_rate(4.0, 10, 1.0, 6.0, np.array([100, 400]))
    assert rates[0] / rates[1] == pytest.approx(2.0)
    assert rates[0] == pytest.approx(4.0 * math.sqrt(10 * math.log(600.0) / 100))
