import numpy as np
import pytest

from logic.calibration import calibrate
from logic.errors import CalibrationError
from logic.models import ModelKind, SpotModel, validate
from logic.pricing import term_structure

MATURITIES = np.array([27, 48, 69, 95, 132, 158, 181, 216, 237]) / 252


def synthetic_curve(kind, mu_q, theta_q, sigma, s0):
    model = SpotModel(kind, mu_q, theta_q, mu_q, theta_q, sigma)
    return term_structure(model, s0, MATURITIES)


class TestRoundTrip:
    @pytest.mark.parametrize("kind", [ModelKind.OU, ModelKind.CIR])
    @pytest.mark.parametrize("mu_q, theta_q, s0", [(4.59, 40.36, 80.86), (4.55, 18.16, 12.12)])
    def test_affine_models(self, kind, mu_q, theta_q, s0):
        result = calibrate(kind, s0, synthetic_curve(kind, mu_q, theta_q, 5.0, s0))
        assert result.params.mu_q == pytest.approx(mu_q, rel=5e-3)
        assert result.params.theta_q == pytest.approx(theta_q, rel=5e-3)
        assert result.sse < 1e-10
        assert result.converged

    @pytest.mark.parametrize("mu_q, theta_q, sigma, s0", [(3.25, 3.65, 0.15, 80.86), (4.08, 3.06, 1.63, 12.12)])
    def test_exponential_ou(self, mu_q, theta_q, sigma, s0):
        result = calibrate(ModelKind.XOU, s0, synthetic_curve(ModelKind.XOU, mu_q, theta_q, sigma, s0))
        assert result.params.mu_q == pytest.approx(mu_q, rel=1e-2)
        assert result.params.theta_q == pytest.approx(theta_q, rel=1e-2)
        assert result.params.sigma == pytest.approx(sigma, rel=1e-2)
        assert result.sse < 1e-10

    def test_fixed_sigma(self):
        curve = synthetic_curve(ModelKind.XOU, 4.08, 3.06, 1.63, 12.0)
        result = calibrate(ModelKind.XOU, 12.0, curve, sigma_fixed=1.63)
        assert result.params.sigma == 1.63
        assert result.params.mu_q == pytest.approx(4.08, rel=1e-2)

    def test_accepts_raw_quotes(self):
        curve = synthetic_curve(ModelKind.CIR, 4.55, 18.16, 5.0, 12.12)
        # unsorted quotes are fine
        order = np.arange(len(curve))[::-1]
        quotes = (np.array(curve.maturities)[order], np.array(curve.prices)[order])
        result = calibrate("cir", 12.12, quotes)
        assert result.params.theta_q == pytest.approx(18.16, rel=5e-3)


class TestProperties:
    def test_sigma_never_moves_affine_fits(self):
        curve = synthetic_curve(ModelKind.CIR, 4.55, 18.16, 5.0, 12.12)
        base_low = SpotModel(ModelKind.CIR, 8.57, 17.58, 1.0, 1.0, 1.0)
        low = calibrate(ModelKind.CIR, 12.12, curve, base=base_low)
        high = calibrate(ModelKind.CIR, 12.12, curve, base=base_low.replace(sigma=9.0))
        assert low.params.mu_q == high.params.mu_q
        assert low.params.theta_q == high.params.theta_q
        assert high.params.sigma == 9.0

    def test_base_supplies_historical_fields(self):
        curve = synthetic_curve(ModelKind.OU, 4.55, 18.16, 5.0, 12.12)
        base = SpotModel(ModelKind.OU, 8.57, 17.58, 1.0, 1.0, 18.7)
        result = calibrate(ModelKind.OU, 12.12, curve, base=base)
        assert (result.params.mu, result.params.theta) == (8.57, 17.58)
        assert result.params.sigma == 18.7

    def test_best_point_beats_every_start(self):
        curve = synthetic_curve(ModelKind.XOU, 4.08, 3.06, 1.63, 12.0)
        result = calibrate(ModelKind.XOU, 12.0, curve)
        assert len(result.starts) == 8
        assert all(result.sse <= start_sse for _, start_sse in result.starts)

    def test_fit_passes_validation(self):
        result = calibrate(ModelKind.CIR, 12.12, synthetic_curve(ModelKind.CIR, 4.55, 18.16, 5.0, 12.12))
        assert result.sse >= 0
        assert validate(result.params) == []


class TestErrors:
    def test_single_quote(self):
        with pytest.raises(CalibrationError, match="insufficient data"):
            calibrate(ModelKind.OU, 12.12, ([0.1], [12.12]))

    def test_equal_maturities(self):
        with pytest.raises(CalibrationError, match="degenerate"):
            calibrate(ModelKind.OU, 12.12, ([0.1, 0.1, 0.1], [13.0, 13.1, 13.2]))

    def test_two_quotes_cannot_fit_three_parameters(self):
        with pytest.raises(CalibrationError, match="insufficient data"):
            calibrate(ModelKind.XOU, 12.0, ([0.1, 0.2], [13.0, 14.0]))

    def test_positive_spot_required(self):
        with pytest.raises(CalibrationError):
            calibrate(ModelKind.CIR, 0.0, ([0.1, 0.2], [13.0, 14.0]))
