"""Futures prices, their dynamics under P, and term-structure shapes."""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from logic.errors import ModelDomainError, ParameterError
from logic.models import ModelKind

logger = logging.getLogger(__name__)

THRESHOLD_RTOL = 1e-12


@dataclass(frozen=True)
class ContractSpec:
    """Futures maturity T, trading deadline T_hat <= T, discount rate and costs."""

    maturity: float
    deadline: float
    rate: float
    cost: float = 0.0
    cost_hat: float = 0.0

    def __post_init__(self):
        for name in ("maturity", "deadline", "rate", "cost", "cost_hat"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0 < self.deadline <= self.maturity:
            raise ParameterError(
                f"trading deadline must satisfy 0 < deadline <= maturity (got {self.deadline}, {self.maturity})")
        if self.rate < 0:
            raise ParameterError(f"discount rate must be non-negative (got {self.rate})")
        if self.cost < 0 or self.cost_hat < 0:
            raise ParameterError(f"transaction costs must be non-negative (got {self.cost}, {self.cost_hat})")

    def with_costs(self, cost, cost_hat):
        return ContractSpec(self.maturity, self.deadline, self.rate, cost, cost_hat)

    def held_to_maturity(self):
        """Same contract with the trading deadline moved out to maturity."""
        return ContractSpec(self.maturity, self.maturity, self.rate, self.cost, self.cost_hat)


def validate_contract(contract):
    violations = []
    if contract.rate <= 0:
        violations.append(f"rate must be positive (got {contract.rate})")
    return violations


class Slope(str, Enum):
    UP = "up"
    DOWN = "down"
    FLAT = "flat"


class Curvature(str, Enum):
    CONVEX = "convex"
    CONCAVE = "concave"
    FLAT = "flat"


@dataclass(frozen=True)
class TermStructureRegime:
    slope: Slope
    curvature: Curvature

    def __str__(self):
        return f"{self.slope.value}/{self.curvature.value}"


@dataclass(frozen=True)
class FuturesCurve:
    maturities: tuple
    prices: tuple
    s0: float

    def __post_init__(self):
        maturities = tuple(float(T) for T in self.maturities)
        prices = tuple(float(p) for p in self.prices)
        if len(maturities) != len(prices):
            raise ParameterError("a futures curve needs one price per maturity")
        if any(T <= 0 for T in maturities) or any(b <= a for a, b in zip(maturities, maturities[1:])):
            raise ParameterError("curve maturities must be positive and strictly increasing")
        if not all(np.isfinite(prices)):
            raise ParameterError("curve prices must be finite")
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "s0", float(self.s0))

    def __len__(self):
        return len(self.maturities)


@dataclass(frozen=True)
class DriftThreshold:
    """Spot level where a drift changes sign.

    level is None when the drift has one sign for every spot; positive_above
    tells which side of the level carries the positive drift.
    """

    level: object
    positive_above: object
    note: str = ""


def _spot(model, s):
    s = np.asarray(s, dtype=float)
    if model.kind == ModelKind.CIR and np.any(s < 0):
        raise ModelDomainError("cir spot must be non-negative")
    if model.kind == ModelKind.XOU and np.any(s <= 0):
        raise ModelDomainError("xou spot must be positive")
    return s


def _time_to_maturity(t, T):
    tau = np.asarray(T, dtype=float) - np.asarray(t, dtype=float)
    if np.any(tau < 0):
        raise ModelDomainError(f"valuation time {t} is after maturity {T}")
    return tau


def _out(value):
    return float(value) if np.ndim(value) == 0 else value


def _xou_log_futures(model, tau, log_s):
    """log f for the XOU model given time to maturity and log spot."""
    m, th, sigma2 = model.mu_q, model.theta_q, model.sigma ** 2
    decay = np.exp(-m * tau)
    return decay * log_s + (1 - decay) * (th - sigma2 / (2 * m)) + sigma2 * (1 - decay ** 2) / (4 * m)


def futures_price(model, t, s, T):
    """f(t, s; T) = E^Q{S_T | S_t = s}."""
    tau = _time_to_maturity(t, T)
    s = _spot(model, s)
    if model.kind == ModelKind.XOU:
        price = np.exp(_xou_log_futures(model, tau, np.log(s)))
        # exact convergence at maturity
        price = np.where(tau == 0, s, price)
        return _out(price)
    return _out((s - model.theta_q) * np.exp(-model.mu_q * tau) + model.theta_q)


def futures_drift_P(model, t, s, T):
    """Drift of df_t^T under the historical measure, evaluated from the spot."""
    tau = _time_to_maturity(t, T)
    s = _spot(model, s)
    decay = np.exp(-model.mu_q * tau)
    if model.kind != ModelKind.XOU:
        return _out(decay * (model.mu * (model.theta - s) - model.mu_q * (model.theta_q - s)))
    m, th, sigma2 = model.mu_q, model.theta_q, model.sigma ** 2
    f = futures_price(model, t, s, T)
    bracket = (np.log(f) + (decay - 1) * (th - sigma2 / (2 * m)) + sigma2 / (4 * m) * (decay ** 2 - 1)) * (m - model.mu)
    bracket = bracket + decay * (model.mu * model.theta - m * th)
    return _out(bracket * f)


def futures_diffusion_P(model, t, s, T):
    """Diffusion coefficient of df_t^T (the same under P and Q)."""
    tau = _time_to_maturity(t, T)
    s = _spot(model, s)
    scale = model.sigma * np.exp(-model.mu_q * tau)
    if model.kind == ModelKind.OU:
        return _out(scale * np.ones_like(s))
    if model.kind == ModelKind.CIR:
        return _out(scale * np.sqrt(s))
    return _out(scale * futures_price(model, t, s, T))


def futures_drift_threshold(model):
    """Critical spot above/below which the futures drift under P is positive."""
    speed_gap = model.mu_q - model.mu
    level_gap = model.mu * model.theta - model.mu_q * model.theta_q
    if abs(speed_gap) <= THRESHOLD_RTOL * max(model.mu, model.mu_q):
        if abs(model.theta - model.theta_q) <= THRESHOLD_RTOL * max(1.0, abs(model.theta)):
            return DriftThreshold(None, None, "drift vanishes for every spot: the measures coincide")
        sign = "positive" if model.theta > model.theta_q else "negative"
        return DriftThreshold(None, model.theta > model.theta_q,
                              f"mu_q == mu: drift is {sign} for every spot, no threshold")
    critical = -level_gap / speed_gap
    if model.kind == ModelKind.XOU:
        return DriftThreshold(float(np.exp(critical)), speed_gap > 0, "log-spot threshold exponentiated")
    return DriftThreshold(float(critical), speed_gap > 0)


def _xou_regime_levels(model, T):
    """Slope threshold and the two curvature roots in log s0 for the XOU curve at T."""
    m, th, sigma2 = model.mu_q, model.theta_q, model.sigma ** 2
    slope_level = th - sigma2 / (2 * m) * (1 - np.exp(-m * T))
    half_growth = np.exp(m * T) / 2
    radius = np.sqrt(np.exp(2 * m * T) / 4 + sigma2 / (2 * m))
    return slope_level, slope_level - half_growth - radius, slope_level - half_growth + radius


def _at(x, level):
    return abs(x - level) <= THRESHOLD_RTOL * max(1.0, abs(level))


def classify_term_structure(model, s0, T):
    """Slope and curvature of T -> f(0, s0; T) at maturity T."""
    if T <= 0:
        raise ModelDomainError(f"maturity must be positive (got {T})")
    _spot(model, s0)
    if model.kind != ModelKind.XOU:
        if _at(s0, model.theta_q):
            return TermStructureRegime(Slope.FLAT, Curvature.FLAT)
        if s0 < model.theta_q:
            return TermStructureRegime(Slope.UP, Curvature.CONCAVE)
        return TermStructureRegime(Slope.DOWN, Curvature.CONVEX)

    x = float(np.log(s0))
    slope_level, lower_root, upper_root = _xou_regime_levels(model, T)
    if _at(x, slope_level):
        slope = Slope.FLAT
    else:
        slope = Slope.DOWN if x > slope_level else Slope.UP
    if _at(x, lower_root) or _at(x, upper_root):
        curvature = Curvature.FLAT
    elif lower_root < x < upper_root:
        curvature = Curvature.CONCAVE
    else:
        curvature = Curvature.CONVEX
    return TermStructureRegime(slope, curvature)


def term_structure_slope(model, s0, T):
    """d f(0, s0; T) / dT."""
    m = model.mu_q
    if model.kind != ModelKind.XOU:
        return float(-m * (s0 - model.theta_q) * np.exp(-m * T))
    gap = model.theta_q - model.sigma ** 2 / (2 * m) - np.log(s0)
    growth = m * gap * np.exp(-m * T) + model.sigma ** 2 / 2 * np.exp(-2 * m * T)
    return float(growth * futures_price(model, 0.0, s0, T))


def term_structure_curvature(model, s0, T):
    """d^2 f(0, s0; T) / dT^2."""
    m = model.mu_q
    if model.kind != ModelKind.XOU:
        return float(m ** 2 * (s0 - model.theta_q) * np.exp(-m * T))
    sigma2 = model.sigma ** 2
    gap = model.theta_q - sigma2 / (2 * m) - np.log(s0)
    e = np.exp(-m * T)
    bracket = (m ** 2 * e ** 2 * gap ** 2 + (m * sigma2 * e ** 3 - m ** 2 * e) * gap
               + sigma2 ** 2 / 4 * e ** 4 - sigma2 * m * e ** 2)
    return float(bracket * futures_price(model, 0.0, s0, T))


def term_structure(model, s0, maturities):
    """Futures curve at t = 0 for the given maturities (years)."""
    maturities = [float(T) for T in maturities]
    if any(T <= 0 for T in maturities):
        raise ModelDomainError("maturities must be positive")
    prices = [futures_price(model, 0.0, s0, T) for T in maturities]
    return FuturesCurve(tuple(maturities), tuple(prices), s0)
