import numpy as np
import pytest
from scipy import stats

from oneshot_recovery.metrics import (
    MetricError,
    cosine_similarity,
    error_to_scaled_target,
    fit_rate_slope,
    restart_cosines,
    score,
)
from oneshot_recovery.seeding import make_rng


class TestCosine:
    x = np.array([0.6, 0.8, 0.0])

    def test_scaling(self):
        assert cosine_similarity(self.x, 2 * self.x) == pytest.approx(1.0)
        assert cosine_similarity(self.x, -self.x) == pytest.approx(-1.0)
        assert cosine_similarity(self.x, np.array([0.0, 0.0, 5.0])) == 0.0

    def test_zero_vector(self):
        with pytest.raises(MetricError):
            cosine_similarity(self.x, np.zeros(3))

    def test_restart_cosines_skip_zero_rows(self):
        rows = np.array([self.x, np.zeros(3), -self.x])
        np.testing.assert_allclose(restart_cosines(self.x, rows), [1.0, -1.0])


class TestScaledError:
    def test_values(self):
        x = np.array([1.0, 0.0])
        assert error_to_scaled_target(0.7 * x, x, 0.7) == 0.0
        assert error_to_scaled_target(np.zeros(2), x, -0.7) == pytest.approx(0.7)
        v = make_rng(0).standard_normal(2)
        assert error_to_scaled_target(v, x, 2.0) == pytest.approx(np.linalg.norm(v - 2 * x))

    def test_score_with_projected_target(self):
        x = np.array([0.0, 1.0])
        rec = score(x, np.array([0.0, 2.0]), 2.0, projected_target=np.array([0.0, 1.5]))
        assert rec.cosine == pytest.approx(1.0)
        assert rec.l2_to_mux == 0.0
        assert rec.l2_to_projected_target == pytest.approx(0.5)


class TestRateFit:
    def test_exact_power_law(self):
        fit = fit_rate_slope([(m, 3.0 * m**-0.5) for m in (100, 200, 400, 800)])
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_errors(self):
        fit = fit_rate_slope([(m, 0.25) for m in (10, 20, 40)])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_noisy_power_law_within_ci(self):
        rng = make_rng(5)
        ms = np.geomspace(100, 10_000, 8)
        errs = 2.0 * ms**-0.7 * np.exp(0.05 * rng.standard_normal(ms.size))
        fit = fit_rate_slope(zip(ms, errs))
        half_width = stats.t.ppf(0.995, ms.size - 2) * fit.slope_stderr
        assert abs(fit.slope + 0.7) <= half_width

    @pytest.mark.parametrize("points", [
        [(10, 1.0), (20, 0.5)],
        [(10, 1.0), (10, 0.5), (20, 0.2)],
        [(10, 1.0), (20, 0.0), (40, 0.2)],
    ])
    def test_degenerate(self, points):
        with pytest.raises(MetricError):
            fit_rate_slope(points)
