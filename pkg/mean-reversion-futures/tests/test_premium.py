import numpy as np
import pytest

from logic.errors import ModelDomainError, ParameterError
from logic.models import ModelKind, SpotModel, diffusion, drift, Measure
from logic.premium import (Verdict, classify_liquidation, delayed_liquidation_premium,
                           delayed_liquidation_premium_surface, premium_integrand)
from logic.pricing import futures_price

DAY = 1.0 / 252


@pytest.fixture
def constant_sign_model():
    # r = mu_q - mu with theta = theta_q collapses G to r (c - theta_q)
    return SpotModel(ModelKind.OU, mu=1.0, theta=18.16, mu_q=1.05, theta_q=18.16, sigma=5.0)


class TestPremiumIntegrand:
    def test_at_the_common_mean(self, contract):
        model = SpotModel(ModelKind.OU, mu=3.0, theta=18.0, mu_q=2.0, theta_q=18.0, sigma=4.0)
        value = premium_integrand(model, contract, 0.0, 0.0, 18.0)
        assert value == pytest.approx(contract.rate * (contract.cost - 18.0))

    @pytest.mark.parametrize("kind", [ModelKind.OU, ModelKind.CIR])
    def test_forms_agree_halfway(self, models, contract, kind):
        model, t = models[kind], 4 * DAY
        u = (t + contract.maturity) / 2
        spots = np.linspace(1.0, 40.0, 9)
        np.testing.assert_allclose(premium_integrand(model, contract, t, u, spots, "printed"),
                                   premium_integrand(model, contract, t, u, spots, "ito"), rtol=1e-12)

    @pytest.mark.parametrize("kind", list(ModelKind))
    @pytest.mark.parametrize("s", [8.0, 18.0, 30.0])
    def test_ito_form_is_the_discounted_drift(self, models, contract, kind, s):
        model, T, r, u = models[kind], contract.maturity, contract.rate, 10 * DAY
        f = lambda v, x: futures_price(model, v, x, T)
        hu, hs = 1e-5, 1e-3 * s
        df_du = (f(u + hu, s) - f(u - hu, s)) / (2 * hu)
        df_ds = (f(u, s + hs) - f(u, s - hs)) / (2 * hs)
        d2f_ds2 = (f(u, s + hs) - 2 * f(u, s) + f(u, s - hs)) / hs ** 2
        generator = df_du + drift(model, Measure.HISTORICAL, s) * df_ds + 0.5 * diffusion(model, s) ** 2 * d2f_ds2
        expected = generator - r * (f(u, s) - contract.cost)
        value = premium_integrand(model, contract, 0.0, u, s, "ito")
        assert value == pytest.approx(expected, rel=1e-4, abs=1e-4)

    def test_xou_printed_form_at_maturity(self, xou_model, contract):
        s, T, r = 20.0, contract.maturity, contract.rate
        spread = xou_model.mu * (xou_model.theta - np.log(s)) - xou_model.mu_q * (xou_model.theta_q - np.log(s))
        decay = np.exp(-xou_model.mu_q * T)
        assert premium_integrand(xou_model, contract, 0.0, T, s) == pytest.approx(
            (r + spread * decay) * futures_price(xou_model, 0.0, s, T) - r * contract.cost, rel=1e-12)

    def test_outside_the_window(self, ou_model, contract):
        with pytest.raises(ModelDomainError):
            premium_integrand(ou_model, contract, 0.1, 0.05, 18.0)
        with pytest.raises(ModelDomainError):
            premium_integrand(ou_model, contract, 0.0, contract.maturity + 0.01, 18.0)

    def test_domain(self, cir_model, xou_model, contract):
        with pytest.raises(ModelDomainError):
            premium_integrand(cir_model, contract, 0.0, 0.1, -1.0)
        with pytest.raises(ModelDomainError):
            premium_integrand(xou_model, contract, 0.0, 0.1, 0.0)

    def test_unknown_form(self, ou_model, contract):
        with pytest.raises(ParameterError):
            premium_integrand(ou_model, contract, 0.0, 0.1, 18.0, form="exact")


class TestLiquidationVerdict:
    def test_liquidate_now(self, constant_sign_model, contract):
        advice = classify_liquidation(constant_sign_model, contract, 0.0, n_samples=(21, 21))
        assert advice.verdict == Verdict.LIQUIDATE_NOW
        assert advice.n_positive == 0
        assert advice.max_value == pytest.approx(contract.rate * (contract.cost - 18.16))

    def test_hold_to_maturity(self, constant_sign_model, contract):
        advice = classify_liquidation(constant_sign_model, contract.with_costs(30.0, 30.0), 0.0, n_samples=(21, 21))
        assert advice.verdict == Verdict.HOLD_TO_MATURITY
        assert advice.n_negative == 0

    def test_mixed_signs(self, cir_model, contract):
        advice = classify_liquidation(cir_model, contract, 0.0, s_box=(0.0, 40.0))
        assert advice.verdict == Verdict.INDETERMINATE
        assert advice.min_value < 0 < advice.max_value
        assert advice.n_samples == (201, 201)
        assert "[0, 40]" in str(advice)

    def test_xou_box_is_positive(self, xou_model, contract):
        advice = classify_liquidation(xou_model, contract, 0.0, n_samples=(5, 5), s0=21.33)
        assert advice.box[0] > 0

    def test_needs_two_samples(self, cir_model, contract):
        with pytest.raises(ParameterError):
            classify_liquidation(cir_model, contract, 0.0, n_samples=(1, 50))


class TestPremiumSurface:
    def test_liquidate_case_has_no_premium(self, constant_sign_model, contract, small_grid):
        _, premium = delayed_liquidation_premium_surface(constant_sign_model, contract, small_grid)
        np.testing.assert_allclose(premium, 0.0, atol=1e-6)

    def test_hold_case_premium(self, constant_sign_model, contract, small_grid):
        held = contract.with_costs(30.0, 30.0)
        surface, premium = delayed_liquidation_premium_surface(constant_sign_model, held, small_grid)
        assert np.all(premium[1:-1, :-1] > 0)
        expected = (18.16 - 30.0) * (np.exp(-contract.rate * contract.maturity) - 1)
        value = delayed_liquidation_premium(constant_sign_model, held, small_grid, 0.0, 18.16)
        assert value == pytest.approx(expected, abs=2e-3)
        assert surface.times[-1] == contract.maturity

    def test_premium_is_non_negative_and_vanishes_at_maturity(self, cir_model, contract, small_grid):
        _, premium = delayed_liquidation_premium_surface(cir_model, contract, small_grid)
        assert np.all(premium >= 0)
        np.testing.assert_array_equal(premium[:, -1], 0.0)

    def test_outside_the_grid(self, cir_model, contract, small_grid):
        with pytest.raises(ModelDomainError):
            delayed_liquidation_premium(cir_model, contract, small_grid, 0.0, 1e6)
