import numpy as np
import pytest

from logic.errors import ModelDomainError, ParameterError
from logic.models import Measure, ModelKind, SpotModel, diffusion, terminal_samples
from logic.pricing import (ContractSpec, Curvature, FuturesCurve, Slope, classify_term_structure, futures_diffusion_P,
                           futures_drift_P, futures_drift_threshold, futures_price, term_structure,
                           term_structure_curvature, term_structure_slope, validate_contract)

DAY = 1.0 / 252


@pytest.fixture
def contango_model():
    return SpotModel(ModelKind.CIR, mu=4.55, theta=18.16, mu_q=4.55, theta_q=18.16, sigma=5.33)


class TestFuturesPrice:
    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_converges_to_spot_at_maturity(self, models, kind):
        assert futures_price(models[kind], 0.3, 14.0, 0.3) == pytest.approx(14.0, rel=1e-14)

    def test_fitted_curve_point(self, contango_model):
        assert futures_price(contango_model, 0.0, 12.12, 27 * DAY) == pytest.approx(14.45, abs=5e-3)

    def test_ou_and_cir_share_the_affine_price(self, ou_model, cir_model):
        for s in (3.0, 12.12, 40.0):
            expected = (s - 18.16) * np.exp(-4.55 * 0.2) + 18.16
            assert futures_price(ou_model, 0.0, s, 0.2) == pytest.approx(expected, rel=1e-12)
            assert futures_price(cir_model, 0.0, s, 0.2) == pytest.approx(expected, rel=1e-12)

    def test_price_does_not_depend_on_sigma_for_ou(self, ou_model):
        assert futures_price(ou_model, 0.0, 9.0, 0.5) == futures_price(ou_model.replace(sigma=1.0), 0.0, 9.0, 0.5)

    @pytest.mark.parametrize("T", [5 * DAY, 66 * DAY, 1.0])
    def test_xou_monotone_in_spot_and_sigma(self, xou_model, T):
        spots = np.linspace(5.0, 60.0, 12)
        assert np.all(np.diff(futures_price(xou_model, 0.0, spots, T)) > 0)
        prices = [futures_price(xou_model.replace(sigma=sigma), 0.0, 21.33, T) for sigma in np.linspace(0.1, 3.0, 15)]
        assert np.all(np.diff(prices) < 0)
        h = 1e-6
        sensitivity = (futures_price(xou_model.replace(sigma=1.63 + h), 0.0, 21.33, T)
                       - futures_price(xou_model.replace(sigma=1.63 - h), 0.0, 21.33, T)) / (2 * h)
        decay = np.exp(-xou_model.mu_q * T)
        expected = -futures_price(xou_model, 0.0, 21.33, T) * 1.63 * (1 - decay) ** 2 / (2 * xou_model.mu_q)
        assert sensitivity == pytest.approx(expected, rel=1e-5)

    def test_vectorised_over_spot(self, xou_model):
        spots = np.array([5.0, 20.0, 40.0])
        prices = futures_price(xou_model, 0.0, spots, 0.2)
        assert prices.shape == (3,)
        assert prices[1] == pytest.approx(futures_price(xou_model, 0.0, 20.0, 0.2))

    def test_valuation_after_maturity(self, ou_model):
        with pytest.raises(ModelDomainError):
            futures_price(ou_model, 0.5, 10.0, 0.4)

    def test_xou_needs_positive_spot(self, xou_model):
        with pytest.raises(ModelDomainError):
            futures_price(xou_model, 0.0, 0.0, 0.4)

    @pytest.mark.parametrize("kind", [ModelKind.OU, ModelKind.XOU])
    def test_matches_risk_neutral_expectation(self, models, kind):
        model = models[kind]
        s0, T = 12.12, 66 * DAY
        samples = terminal_samples(model, Measure.RISK_NEUTRAL, s0, T, 100000, seed=21)
        se = samples.std(ddof=1) / np.sqrt(len(samples))
        assert abs(samples.mean() - futures_price(model, 0.0, s0, T)) < 3 * se

    @pytest.mark.slow
    def test_cir_matches_risk_neutral_expectation(self, cir_model):
        samples = terminal_samples(cir_model, Measure.RISK_NEUTRAL, 12.12, 66 * DAY, 100000, seed=21)
        se = samples.std(ddof=1) / np.sqrt(len(samples))
        assert abs(samples.mean() - futures_price(cir_model, 0.0, 12.12, 66 * DAY)) < 3 * se + 0.005 * 18.16


class TestFuturesDynamics:
    def test_drift_changes_sign_at_threshold(self, cir_model):
        threshold = futures_drift_threshold(cir_model)
        assert threshold.level == pytest.approx((4.55 * 18.16 - 8.57 * 17.58) / (4.55 - 8.57))
        # mu_q < mu: the drift is positive below the level
        assert threshold.positive_above is False
        assert futures_drift_P(cir_model, 0.0, threshold.level - 1.0, 0.2) > 0
        assert futures_drift_P(cir_model, 0.0, threshold.level + 1.0, 0.2) < 0

    def test_xou_threshold_is_exponentiated(self, xou_model):
        threshold = futures_drift_threshold(xou_model)
        log_level = (4.08 * 3.06 - 8.57 * 3.03) / (4.08 - 8.57)
        assert threshold.level == pytest.approx(np.exp(log_level))
        assert futures_drift_P(xou_model, 0.0, 0.9 * threshold.level, 0.2) > 0
        assert futures_drift_P(xou_model, 0.0, 1.1 * threshold.level, 0.2) < 0

    def test_no_threshold_when_speeds_agree(self, ou_model):
        threshold = futures_drift_threshold(ou_model.replace(mu_q=ou_model.mu))
        assert threshold.level is None
        assert "no threshold" in threshold.note

    def test_measures_coincide(self, ou_model):
        model = ou_model.replace(mu_q=ou_model.mu, theta_q=ou_model.theta)
        assert futures_drift_threshold(model).positive_above is None
        assert futures_drift_P(model, 0.0, 30.0, 0.2) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_diffusion_at_maturity_is_the_spot_diffusion(self, models, kind):
        model = models[kind]
        assert futures_diffusion_P(model, 0.2, 14.0, 0.2) == pytest.approx(diffusion(model, 14.0))


class TestTermStructure:
    def test_ou_cir_regimes(self, cir_model):
        regime = classify_term_structure(cir_model, 30.0, 0.5)
        assert (regime.slope, regime.curvature) == (Slope.DOWN, Curvature.CONVEX)
        regime = classify_term_structure(cir_model, 12.12, 0.5)
        assert (regime.slope, regime.curvature) == (Slope.UP, Curvature.CONCAVE)

    def test_flat_at_long_run_mean(self, ou_model):
        regime = classify_term_structure(ou_model, 18.16, 0.5)
        assert (regime.slope, regime.curvature) == (Slope.FLAT, Curvature.FLAT)
        assert str(regime) == "flat/flat"

    @pytest.mark.parametrize("kind", list(ModelKind))
    @pytest.mark.parametrize("s0", [5.0, 21.33, 60.0])
    def test_closed_form_derivatives(self, models, kind, s0):
        model, T, h = models[kind], 0.2, 1e-4
        f = lambda m: futures_price(model, 0.0, s0, m)
        slope = (f(T + h) - f(T - h)) / (2 * h)
        curvature = (f(T + h) - 2 * f(T) + f(T - h)) / h ** 2
        assert term_structure_slope(model, s0, T) == pytest.approx(slope, rel=1e-5)
        assert term_structure_curvature(model, s0, T) == pytest.approx(curvature, rel=1e-4)

    @pytest.mark.parametrize("T", [0.05, 0.2, 0.5])
    def test_xou_regime_agrees_with_derivative_signs(self, xou_model, T):
        for s0 in np.geomspace(0.5, 300.0, 40):
            regime = classify_term_structure(xou_model, s0, T)
            slope = term_structure_slope(xou_model, s0, T)
            curvature = term_structure_curvature(xou_model, s0, T)
            scale = futures_price(xou_model, 0.0, s0, T)
            if abs(slope) > 1e-9 * scale:
                assert regime.slope == (Slope.UP if slope > 0 else Slope.DOWN)
            if abs(curvature) > 1e-9 * scale:
                assert regime.curvature == (Curvature.CONVEX if curvature > 0 else Curvature.CONCAVE)

    def test_xou_flat_slope_is_concave(self, xou_model):
        T = 0.3
        level = xou_model.theta_q - xou_model.sigma ** 2 / (2 * xou_model.mu_q) * (1 - np.exp(-xou_model.mu_q * T))
        regime = classify_term_structure(xou_model, np.exp(level), T)
        assert regime.slope == Slope.FLAT
        assert regime.curvature == Curvature.CONCAVE

    def test_term_structure_builds_a_curve(self, contango_model):
        curve = term_structure(contango_model, 12.12, [27 * DAY, 48 * DAY, 69 * DAY])
        assert len(curve) == 3
        assert curve.prices[0] == pytest.approx(futures_price(contango_model, 0.0, 12.12, 27 * DAY))
        assert list(curve.prices) == sorted(curve.prices)

    def test_curve_needs_increasing_maturities(self, contango_model):
        with pytest.raises(ParameterError):
            term_structure(contango_model, 12.12, [0.2, 0.1])
        with pytest.raises(ParameterError):
            FuturesCurve((0.1, 0.2), (1.0,), 1.0)

    def test_non_positive_maturity(self, contango_model):
        with pytest.raises(ModelDomainError):
            classify_term_structure(contango_model, 12.12, 0.0)


class TestContractSpec:
    def test_deadline_after_maturity(self):
        with pytest.raises(ParameterError, match="deadline"):
            ContractSpec(maturity=0.1, deadline=0.2, rate=0.05)

    def test_negative_rate(self):
        with pytest.raises(ParameterError):
            ContractSpec(maturity=0.2, deadline=0.1, rate=-0.01)

    def test_negative_cost(self):
        with pytest.raises(ParameterError):
            ContractSpec(maturity=0.2, deadline=0.1, rate=0.05, cost=-1.0)

    def test_zero_rate_is_constructible_but_flagged(self):
        contract = ContractSpec(maturity=0.2, deadline=0.1, rate=0.0)
        assert validate_contract(contract) == ["rate must be positive (got 0.0)"]

    def test_held_to_maturity(self, contract):
        held = contract.held_to_maturity()
        assert held.deadline == held.maturity == contract.maturity
        assert held.cost == contract.cost
