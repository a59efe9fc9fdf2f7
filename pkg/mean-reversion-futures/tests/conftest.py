import pytest

from logic.models import ModelKind, SpotModel
from logic.pricing import ContractSpec
from logic.vi_solver import GridSpec

DAY = 1.0 / 252


@pytest.fixture(scope="session")
def cir_model():
    return SpotModel(ModelKind.CIR, mu=8.57, theta=17.58, mu_q=4.55, theta_q=18.16, sigma=5.33)


@pytest.fixture(scope="session")
def ou_model():
    return SpotModel(ModelKind.OU, mu=8.57, theta=17.58, mu_q=4.55, theta_q=18.16, sigma=18.7)


@pytest.fixture(scope="session")
def xou_model():
    return SpotModel(ModelKind.XOU, mu=8.57, theta=3.03, mu_q=4.08, theta_q=3.06, sigma=1.63)


@pytest.fixture(scope="session")
def models(cir_model, ou_model, xou_model):
    return {ModelKind.CIR: cir_model, ModelKind.OU: ou_model, ModelKind.XOU: xou_model}


@pytest.fixture(scope="session")
def contract():
    return ContractSpec(maturity=66 * DAY, deadline=22 * DAY, rate=0.05, cost=0.005, cost_hat=0.005)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec(n_time=100, n_space=60)
