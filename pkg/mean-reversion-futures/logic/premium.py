"""Delayed liquidation premium: its integrand, sign verdicts and solved values."""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from logic.errors import ModelDomainError, ParameterError
from logic.models import ModelKind
from logic.pricing import futures_price
from logic.vi_solver import Problem, Sense, solve_vi

logger = logging.getLogger(__name__)

FORMS = ("printed", "ito")
DEFAULT_SAMPLES = (201, 201)


class Verdict(str, Enum):
    HOLD_TO_MATURITY = "hold_to_maturity"
    LIQUIDATE_NOW = "liquidate_now"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class LiquidationAdvice:
    """Sign scan of the premium integrand over a finite (u, s) box."""

    verdict: Verdict
    box: tuple
    n_samples: tuple
    n_positive: int
    n_negative: int
    n_zero: int
    min_value: float
    max_value: float

    def __str__(self):
        lo, hi = self.box
        return f"{self.verdict.value} on sampled box s in [{lo:.6g}, {hi:.6g}]"


def premium_integrand(model, contract, t, u, s, form="printed"):
    """G(u, s) for OU/CIR, G~(u, s) for XOU, seen from analysis time t.

    form="ito" is the drift of e^{-r(u-t)}(f(u, S_u; T) - c) under P, which
    discounts with e^{-mu_q(T-u)} and carries -r f + r c for XOU.
    """
    if form not in FORMS:
        raise ParameterError(f"form must be one of {FORMS} (got {form!r})")
    T, r, c = contract.maturity, contract.rate, contract.cost
    if not t <= u <= T:
        raise ModelDomainError(f"premium integrand needs t <= u <= T (got {t}, {u}, {T})")
    s = np.asarray(s, dtype=float)
    lag = (T - u) if form == "ito" else (u - t)
    decay = np.exp(-model.mu_q * lag)

    if model.kind != ModelKind.XOU:
        if model.kind == ModelKind.CIR and np.any(s < 0):
            raise ModelDomainError("cir spot must be non-negative")
        value = decay * (model.mu * (model.theta - s) + (r - model.mu_q) * (model.theta_q - s)) + r * (c - model.theta_q)
        return float(value) if np.ndim(value) == 0 else value

    if np.any(s <= 0):
        raise ModelDomainError("xou spot must be positive")
    log_s = np.log(s)
    spread = (model.mu * (model.theta - log_s) - model.mu_q * (model.theta_q - log_s)) * decay
    if form == "ito":
        value = (spread - r) * futures_price(model, u, s, T) + r * c
    else:
        mq, thq, sigma2 = model.mu_q, model.theta_q, model.sigma ** 2
        level = np.exp(decay * log_s + (1 - decay) * (thq - sigma2 / (2 * mq)) + sigma2 / (4 * mq) * (1 - decay ** 2))
        value = (r + spread) * level - r * c
    return float(value) if np.ndim(value) == 0 else value


def default_box(model, s0=None):
    """Spot range scanned when none is given."""
    if model.kind == ModelKind.XOU:
        centre = max(s0 or 0.0, float(np.exp(model.theta_q)))
        return centre * np.exp(-3.0), 3.0 * centre
    return 0.0, 3.0 * max(s0 or 0.0, model.theta_q)


def classify_liquidation(model, contract, t, s_box=None, n_samples=DEFAULT_SAMPLES, s0=None, form="printed"):
    """HoldToMaturity if the integrand is never negative on the box, LiquidateNow if never positive."""
    n_u, n_s = n_samples
    if n_u < 2 or n_s < 2:
        raise ParameterError(f"need at least two samples per axis (got {n_samples})")
    lo, hi = default_box(model, s0) if s_box is None else s_box
    if model.kind == ModelKind.XOU:
        spots = np.geomspace(lo, hi, n_s)
    else:
        spots = np.linspace(lo, hi, n_s)
    times = np.linspace(t, contract.maturity, n_u)
    values = np.vstack([premium_integrand(model, contract, t, u, spots, form) for u in times])

    n_positive = int(np.sum(values > 0))
    n_negative = int(np.sum(values < 0))
    if n_negative == 0:
        verdict = Verdict.HOLD_TO_MATURITY
    elif n_positive == 0:
        verdict = Verdict.LIQUIDATE_NOW
    else:
        verdict = Verdict.INDETERMINATE
    advice = LiquidationAdvice(verdict, (float(lo), float(hi)), (n_u, n_s), n_positive, n_negative,
                               values.size - n_positive - n_negative, float(values.min()), float(values.max()))
    logger.info("liquidation verdict: %s", advice)
    return advice


def delayed_liquidation_premium_surface(model, contract, grid):
    """L = V - (f - c) on the whole grid, V solved with the deadline moved to maturity."""
    held = contract.held_to_maturity()
    grid = grid.resolved(model)
    spots, times = grid.spots(), grid.times(held.deadline)
    obstacle = np.column_stack([futures_price(model, u, spots, held.maturity) for u in times]) - held.cost
    v = solve_vi(model, held, grid, obstacle, Sense.MAX, Problem.V)
    return v, v.excess


def delayed_liquidation_premium(model, contract, grid, t, s):
    """L(t, s) = V(t, s) - (f(t, s; T) - c) >= 0."""
    v, _ = delayed_liquidation_premium_surface(model, contract, grid)
    return max(v.excess_at(t, s), 0.0)
