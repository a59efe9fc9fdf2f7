"""Roll yield on spot paths, its decomposition across rolls and its dynamics."""

import logging
from dataclasses import dataclass
from multiprocessing import Pool, cpu_count

import numpy as np

from logic.errors import ModelDomainError, ParameterError
from logic.models import Measure, ModelKind, PathRequest, simulate
from logic.pricing import DriftThreshold, futures_price

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RollSchedule:
    """Maturities T_1 < T_2 < ... of the contracts held in turn (years)."""

    maturities: tuple

    def __post_init__(self):
        maturities = tuple(float(T) for T in self.maturities)
        if not maturities:
            raise ParameterError("a roll schedule needs at least one maturity")
        if maturities[0] <= 0 or any(b <= a for a, b in zip(maturities, maturities[1:])):
            raise ParameterError("schedule maturities must be positive and strictly increasing")
        object.__setattr__(self, "maturities", maturities)

    def contract_index(self, t):
        """i(t) = min{i : T_{i-1} < t <= T_i} as a zero-based index, with T_0 = 0."""
        if t < 0:
            raise ModelDomainError(f"time {t} precedes the schedule")
        for i, T in enumerate(self.maturities):
            if t <= T:
                return i
        raise ModelDomainError(f"schedule exhausted: t={t} is after the last maturity {self.maturities[-1]}")

    def held_maturity(self, t):
        return self.maturities[self.contract_index(t)]

    def rolls_before(self, t):
        """Maturities T_j with j < i(t): the rolls already executed by time t."""
        return self.maturities[:self.contract_index(t)]


@dataclass(frozen=True)
class RollDecomposition:
    """Cumulative roll yield split into basis return and roll adjustment.

    Fields are floats for a single path or per-path arrays.
    """

    basis_return: object
    cumulative_roll_adjustment: object

    @property
    def total(self):
        return self.basis_return + self.cumulative_roll_adjustment


@dataclass(frozen=True)
class MonteCarloRollYield:
    time: float
    decomposition: RollDecomposition
    mean: float
    std_error: float
    n_paths: int


def roll_yield(model, path, t1, t2, T):
    """R(t1, t2, T) = (f_t2 - f_t1) - (S_t2 - S_t1), one value per path."""
    if not t1 < t2 <= T:
        raise ModelDomainError(f"roll yield needs t1 < t2 <= T (got {t1}, {t2}, {T})")
    s1, s2 = path.at(t1), path.at(t2)
    futures_change = futures_price(model, t2, s2, T) - futures_price(model, t1, s1, T)
    return futures_change - (s2 - s1)


def cumulative_roll_yield(model, path, schedule, t):
    """Roll yield from 0 to t while rolling through every contract of the schedule."""
    held = schedule.held_maturity(t)
    s0, st = path.at(0.0), path.at(t)
    basis_return = (futures_price(model, t, st, held) - st) - (futures_price(model, 0.0, s0, schedule.maturities[0]) - s0)
    adjustment = np.zeros_like(st)
    maturities = schedule.maturities
    for j, T in enumerate(schedule.rolls_before(t)):
        s_roll = path.at(T)
        adjustment = adjustment + s_roll - futures_price(model, T, s_roll, maturities[j + 1])
    if np.ndim(basis_return) == 0:
        return RollDecomposition(float(basis_return), float(adjustment))
    return RollDecomposition(basis_return, adjustment)


def _log_spot_moments(model, s0, t, variance_form):
    """Mean and half-variance term of ln S_t under P for the XOU expected-spot factor."""
    m, th, sigma2 = model.mu, model.theta, model.sigma ** 2
    decay = np.exp(-m * t)
    mean = decay * np.log(s0) + (1 - decay) * (th - sigma2 / (2 * m))
    factor = (1 - decay) if variance_form == "printed" else (1 - decay ** 2)
    return mean, sigma2 / (4 * m) * factor


def _xou_expected_futures(model, s0, t, T):
    """E{f(t, S_t; T)} under P for the XOU model."""
    m, th, sigma2 = model.mu, model.theta, model.sigma ** 2
    mq, thq = model.mu_q, model.theta_q
    a = np.exp(-mq * (T - t))
    decay = np.exp(-m * t)
    exponent = (a * decay * np.log(s0)
                + (th - sigma2 / (2 * m)) * (1 - decay) * a
                + sigma2 / (4 * m) * a ** 2 * (1 - decay ** 2)
                + (1 - a) * (thq - sigma2 / (2 * mq))
                + sigma2 / (4 * mq) * (1 - a ** 2))
    return float(np.exp(exponent))


def _xou_expected_spot(model, s0, t, variance_form):
    mean, half_variance = _log_spot_moments(model, s0, t, variance_form)
    return float(np.exp(mean + half_variance))


def expected_roll_yield(model, s0, schedule, t, variance_form="printed"):
    """E{R(0, t)} under P in closed form.

    For XOU, variance_form="printed" keeps the (1 - e^{-mu t}) factor in the
    expected-spot terms; "exact" uses the log-normal (1 - e^{-2 mu t}).
    """
    if variance_form not in ("printed", "exact"):
        raise ParameterError(f"variance_form must be 'printed' or 'exact' (got {variance_form!r})")
    held = schedule.held_maturity(t)
    rolls = schedule.rolls_before(t)
    maturities = schedule.maturities
    first = maturities[0]

    if model.kind != ModelKind.XOU:
        m, th, mq, thq = model.mu, model.theta, model.mu_q, model.theta_q
        drift_gap = (s0 - th) * np.exp(-m * t) + th - thq
        value = drift_gap * (np.exp(-mq * (held - t)) - 1) - (s0 - thq) * (np.exp(-mq * first) - 1)
        for j, T in enumerate(rolls):
            value += ((s0 - th) * np.exp(-m * T) + th - thq) * (1 - np.exp(-mq * (maturities[j + 1] - T)))
        return float(value)

    if variance_form == "printed":
        logger.warning("xou expected roll yield uses the (1 - e^{-mu t}) variance factor; "
                       "pass variance_form='exact' for the log-normal moment")
    y1 = _xou_expected_futures(model, s0, t, held) - _xou_expected_spot(model, s0, t, variance_form)
    y2 = sum(_xou_expected_spot(model, s0, T, variance_form) - _xou_expected_futures(model, s0, T, maturities[j + 1])
             for j, T in enumerate(rolls))
    return float(y1 + y2 - (futures_price(model, 0.0, s0, first) - s0))


def roll_yield_drift(model, t, s, schedule):
    """Drift of dR(0, t) under P, expressed through the spot."""
    gap = schedule.held_maturity(t) - t
    decay = np.exp(-model.mu_q * gap)
    if model.kind != ModelKind.XOU:
        s = np.asarray(s, dtype=float)
        if model.kind == ModelKind.CIR and np.any(s < 0):
            raise ModelDomainError("cir spot must be non-negative")
        spot_drift = model.mu * (model.theta - s)
        value = decay * (spot_drift - model.mu_q * (model.theta_q - s)) - spot_drift
        return float(value) if np.ndim(value) == 0 else value

    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ModelDomainError("xou spot must be positive")
    log_s = np.log(s)
    mq, thq, sigma2 = model.mu_q, model.theta_q, model.sigma ** 2
    futures = np.exp(decay * log_s + (1 - decay) * (thq - sigma2 / (2 * mq)) + sigma2 / (4 * mq) * (1 - decay ** 2))
    value = (log_s * (mq - model.mu) + model.mu * model.theta - mq * thq) * futures * decay
    value = value - model.mu * (model.theta - log_s) * s
    return float(value) if np.ndim(value) == 0 else value


def roll_yield_drift_threshold(model, t, schedule):
    """Spot level above which the OU/CIR roll-yield drift is positive."""
    if model.kind == ModelKind.XOU:
        return DriftThreshold(None, None, "no closed-form threshold under the exponential OU model")
    decay = np.exp(-model.mu_q * (schedule.held_maturity(t) - t))
    numerator = decay * (model.mu_q * model.theta_q - model.mu * model.theta) + model.mu * model.theta
    denominator = decay * (model.mu_q - model.mu) + model.mu
    return DriftThreshold(float(numerator / denominator), True)


def roll_yield_diffusion(model, t, s, schedule):
    """Diffusion coefficient of dR(0, t)."""
    held = schedule.held_maturity(t)
    decay = np.exp(-model.mu_q * (held - t))
    s = np.asarray(s, dtype=float)
    if model.kind == ModelKind.OU:
        value = model.sigma * (decay - 1) * np.ones_like(s)
    elif model.kind == ModelKind.CIR:
        value = model.sigma * (decay - 1) * np.sqrt(s)
    else:
        value = model.sigma * (decay * futures_price(model, t, s, held) - s)
    return float(value) if np.ndim(value) == 0 else value


def covariation_rate(model, t, s, T):
    """d<R, S>_t / dt while holding the contract maturing at T."""
    if t > T:
        raise ModelDomainError(f"valuation time {t} is after maturity {T}")
    s = np.asarray(s, dtype=float)
    decay = np.exp(-model.mu_q * (T - t))
    sigma2 = model.sigma ** 2
    if model.kind == ModelKind.OU:
        value = sigma2 * (decay - 1) * np.ones_like(s)
    elif np.any(s < 0) or (model.kind == ModelKind.XOU and np.any(s <= 0)):
        raise ModelDomainError(f"spot {s} outside the {model.kind.value} domain")
    elif model.kind == ModelKind.CIR:
        value = sigma2 * (decay - 1) * s
    else:
        value = sigma2 * (decay * futures_price(model, t, s, T) - s) * s
    return float(value) if np.ndim(value) == 0 else value


def _simulate_chunk(job):
    model, s0, schedule, t, dt, n_paths, seed_seq = job
    if not 0 < dt <= t:
        raise ParameterError(f"time step {dt} must be positive and no longer than the horizon {t}")
    n_steps = int(np.ceil(t / dt - 1e-9))
    request = PathRequest(s0, dt, n_steps, n_paths)
    paths = simulate(model, Measure.HISTORICAL, request, rng=np.random.default_rng(seed_seq))
    decomposition = cumulative_roll_yield(model, paths, schedule, t)
    return decomposition.basis_return, decomposition.cumulative_roll_adjustment


def monte_carlo_roll_yield(model, s0, schedule, t, n_paths, dt, seed=0, workers=1, chunk_size=5000):
    """Simulate P-paths and decompose the cumulative roll yield at time t on each.

    Paths are drawn in fixed chunks with their own seed substreams, so the
    result does not depend on the number of workers.
    """
    if n_paths < 2:
        raise ParameterError("monte carlo needs at least two paths")
    schedule.contract_index(t)
    sizes = [chunk_size] * (n_paths // chunk_size)
    if n_paths % chunk_size:
        sizes.append(n_paths % chunk_size)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(model, s0, schedule, t, dt, size, stream) for size, stream in zip(sizes, streams)]

    workers = cpu_count() if workers in (None, 0) else workers
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            results = pool.map(_simulate_chunk, jobs)
    else:
        results = [_simulate_chunk(job) for job in jobs]

    basis = np.concatenate([r[0] for r in results])
    adjustment = np.concatenate([r[1] for r in results])
    decomposition = RollDecomposition(basis, adjustment)
    totals = decomposition.total
    mean = float(np.mean(totals))
    std_error = float(np.std(totals, ddof=1) / np.sqrt(len(totals)))
    logger.info("monte carlo roll yield at t=%g over %d paths: mean=%.6g se=%.3g", t, len(totals), mean, std_error)
    return MonteCarloRollYield(float(t), decomposition, mean, std_error, len(totals))
