"""Least-squares fit of risk-neutral parameters to an observed futures curve."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from logic.errors import CalibrationError, ModelDomainError
from logic.models import ModelKind, SpotModel
from logic.pricing import FuturesCurve, futures_price

logger = logging.getLogger(__name__)

N_STARTS = 8
START_SEED = 20160
SPEED_RANGE = (0.1, 20.0)
SIGMA_RANGE = (0.05, 3.0)
XATOL = 1e-10
FATOL = 1e-16
MAX_ITER = 2000
MAX_RESTARTS = 3


@dataclass(frozen=True)
class CalibrationResult:
    params: SpotModel
    sse: float
    iterations: int
    converged: bool
    # (start point in natural units, sse at the start)
    starts: list = field(default_factory=list, repr=False)


def _as_curve(curve, s0):
    if isinstance(curve, FuturesCurve):
        return curve
    maturities, prices = (np.asarray(v, dtype=float) for v in curve)
    if len(maturities) < 2:
        raise CalibrationError("insufficient data: a curve needs at least two maturities")
    if np.ptp(maturities) == 0:
        raise CalibrationError("degenerate curve: all maturities are equal")
    order = np.argsort(maturities)
    return FuturesCurve(tuple(maturities[order]), tuple(prices[order]), s0)


class _Objective:
    """Sum of squared price errors as a function of log-scaled parameters."""

    def __init__(self, kind, s0, curve, sigma_fixed):
        self.kind = kind
        self.s0 = float(s0)
        self.maturities = np.asarray(curve.maturities)
        self.prices = np.asarray(curve.prices)
        self.fit_sigma = kind == ModelKind.XOU and sigma_fixed is None
        # sigma never enters OU/CIR prices, so pin it for bit-identical fits
        self.sigma = 1.0 if kind != ModelKind.XOU else sigma_fixed

    @property
    def dimension(self):
        return 3 if self.fit_sigma else 2

    def unpack(self, x):
        mu_q = float(np.exp(x[0]))
        theta_q = float(x[1]) if self.kind == ModelKind.OU else float(np.exp(x[1]))
        sigma = float(np.exp(x[2])) if self.fit_sigma else float(self.sigma)
        return mu_q, theta_q, sigma

    def pack(self, mu_q, theta_q, sigma=None):
        x = [np.log(mu_q), theta_q if self.kind == ModelKind.OU else np.log(theta_q)]
        if self.fit_sigma:
            x.append(np.log(sigma))
        return np.array(x)

    def model(self, x):
        mu_q, theta_q, sigma = self.unpack(x)
        return SpotModel(self.kind, mu_q, theta_q, mu_q, theta_q, sigma)

    def __call__(self, x):
        model = self.model(x)
        try:
            fitted = futures_price(model, 0.0, self.s0, self.maturities)
        except (ModelDomainError, FloatingPointError):
            return np.inf
        sse = float(np.sum((fitted - self.prices) ** 2))
        return sse if np.isfinite(sse) else np.inf


def _start_points(objective, prices):
    """Scrambled Sobol starts in natural units, mapped to log coordinates."""
    sampler = qmc.Sobol(d=objective.dimension, scramble=True, seed=START_SEED)
    unit = sampler.random(N_STARTS)
    lo, hi = float(np.min(prices)), float(np.max(prices))
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        lo, hi = lo - 0.1 * max(1.0, abs(lo)), hi + 0.1 * max(1.0, abs(hi))
    starts = []
    for row in unit:
        mu_q = float(np.exp(np.log(SPEED_RANGE[0]) + row[0] * np.log(SPEED_RANGE[1] / SPEED_RANGE[0])))
        if objective.kind == ModelKind.XOU:
            log_lo, log_hi = np.log(max(lo, 1e-8)), np.log(max(hi, 1e-8))
            theta_q = float(np.exp(log_lo + row[1] * (log_hi - log_lo)))
        else:
            theta_q = lo + row[1] * (hi - lo)
        sigma = None
        if objective.fit_sigma:
            sigma = float(np.exp(np.log(SIGMA_RANGE[0]) + row[2] * np.log(SIGMA_RANGE[1] / SIGMA_RANGE[0])))
        if objective.kind == ModelKind.CIR or objective.kind == ModelKind.XOU:
            theta_q = max(theta_q, 1e-8)
        starts.append(objective.pack(mu_q, theta_q, sigma))
    return starts


def _minimize(objective, x0):
    return optimize.minimize(objective, x0, method="Nelder-Mead",
                             options={"xatol": XATOL, "fatol": FATOL, "maxiter": MAX_ITER})


def calibrate(kind, s0, curve, sigma_fixed=None, base=None):
    """Fit (mu_q, theta_q), plus sigma for XOU unless sigma_fixed is given.

    Historical fields are copied from base when supplied, otherwise they mirror
    the fitted risk-neutral values.
    """
    kind = ModelKind.parse(kind)
    if kind != ModelKind.OU and s0 <= 0:
        raise CalibrationError(f"{kind.value} calibration needs a positive spot (got {s0})")
    curve = _as_curve(curve, s0)
    if len(curve) < 2:
        raise CalibrationError("insufficient data: a curve needs at least two maturities")
    if sigma_fixed is None and base is not None and kind != ModelKind.XOU:
        sigma_fixed = base.sigma
    objective = _Objective(kind, s0, curve, sigma_fixed)
    if len(curve) < objective.dimension:
        raise CalibrationError(
            f"insufficient data: {len(curve)} quotes cannot pin {objective.dimension} parameters")

    logger.info("calibrating %s to %d quotes (s0=%g)", kind.value, len(curve), s0)
    starts, best, iterations = [], None, 0
    for x0 in _start_points(objective, curve.prices):
        start_sse = objective(x0)
        starts.append((objective.unpack(x0), start_sse))
        result = _minimize(objective, x0)
        iterations += int(result.nit)
        logger.debug("start %s -> sse %.3e (%d iterations)", objective.unpack(x0), result.fun, result.nit)
        if best is None or result.fun < best.fun:
            best = result

    restarts = 0
    while not best.success and restarts < MAX_RESTARTS:
        restarts += 1
        retry = _minimize(objective, best.x)
        iterations += int(retry.nit)
        if retry.fun <= best.fun:
            best = retry

    mu_q, theta_q, sigma = objective.unpack(best.x)
    if kind != ModelKind.XOU:
        sigma = sigma_fixed if sigma_fixed is not None else 1.0
    if base is not None:
        params = SpotModel(kind, base.mu, base.theta, mu_q, theta_q, sigma)
    else:
        params = SpotModel(kind, mu_q, theta_q, mu_q, theta_q, sigma)

    converged = bool(best.success)
    if not converged:
        logger.warning("calibration did not converge after %d restarts (sse=%.3e)", restarts, best.fun)
    logger.info("calibrated %s: mu_q=%.6g theta_q=%.6g sigma=%.6g sse=%.3e",
                kind.value, mu_q, theta_q, sigma, best.fun)
    return CalibrationResult(params, float(best.fun), iterations, converged, starts)
