"""Mean-reverting spot models (OU, CIR, exponential OU) under P and Q.

Each model carries its historical parameters (mu, theta), its risk-neutral
parameters (mu_q, theta_q) and one volatility shared by both measures.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from logic.errors import ModelDomainError, ParameterError

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    OU = "ou"
    CIR = "cir"
    XOU = "xou"

    @classmethod
    def parse(cls, value):
        """Accept an enum member or a case-insensitive name such as 'CIR'."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(f"unknown model kind {value!r}; expected ou, cir or xou") from None


class Measure(str, Enum):
    HISTORICAL = "historical"
    RISK_NEUTRAL = "risk_neutral"


@dataclass(frozen=True)
class SpotModel:
    """Spot dynamics: dS = m(th - S)dt + ... with (m, th) picked by the measure."""

    kind: ModelKind
    mu: float
    theta: float
    mu_q: float
    theta_q: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        for name in ("mu", "theta", "mu_q", "theta_q", "sigma"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def params(self, measure):
        """Return (speed, level) for the requested measure."""
        if measure == Measure.RISK_NEUTRAL:
            return self.mu_q, self.theta_q
        return self.mu, self.theta

    def replace(self, **changes):
        values = {name: getattr(self, name) for name in ("kind", "mu", "theta", "mu_q", "theta_q", "sigma")}
        values.update(changes)
        return SpotModel(**values)

    @property
    def equilibrium_spot(self):
        """Spot level where the historical drift vanishes."""
        return float(np.exp(self.theta)) if self.kind == ModelKind.XOU else self.theta


@dataclass(frozen=True)
class PathRequest:
    s0: float
    dt: float
    n_steps: int
    n_paths: int
    seed: int = 0


@dataclass(frozen=True)
class PathSet:
    """Simulated spot paths; values has shape (n_paths, n_steps + 1)."""

    s0: float
    dt: float
    n_steps: int
    n_paths: int
    seed: int
    values: np.ndarray = field(repr=False)

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def horizon(self):
        return self.n_steps * self.dt

    def step_index(self, t):
        """Grid index of time t, snapped down to the nearest step."""
        if t < 0:
            raise ModelDomainError(f"time {t} precedes the start of the paths")
        index = int(np.floor(t / self.dt + 1e-9))
        if index > self.n_steps or t > self.horizon + 1e-9 * self.dt:
            raise ModelDomainError(f"time {t} lies beyond the path horizon {self.horizon}")
        return index

    def at(self, t):
        """Spot values of every path at time t."""
        return self.values[:, self.step_index(t)]

    def grid_time(self, t):
        return self.step_index(t) * self.dt

    @classmethod
    def from_values(cls, values, dt, seed=0):
        """Wrap an explicit (n_paths, n_steps + 1) array, e.g. a hand-built path."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(float(values[0, 0]), float(dt), values.shape[1] - 1, values.shape[0], seed, values)


def validate(model):
    """List every violated model invariant; an empty list means the model is usable."""
    violations = []
    for name in ("mu", "mu_q", "sigma"):
        value = getattr(model, name)
        if not np.isfinite(value) or value <= 0:
            violations.append(f"{name} must be positive (got {value})")
    if model.kind in (ModelKind.CIR, ModelKind.XOU):
        for name in ("theta", "theta_q"):
            value = getattr(model, name)
            if not np.isfinite(value) or value <= 0:
                violations.append(f"{name} must be positive for {model.kind.value} (got {value})")
    if model.kind == ModelKind.CIR:
        sigma2 = model.sigma ** 2
        if 2 * model.mu * model.theta < sigma2:
            violations.append(
                f"Feller condition fails under P: 2*mu*theta = {2 * model.mu * model.theta:.6g} < sigma^2 = {sigma2:.6g}")
        if 2 * model.mu_q * model.theta_q < sigma2:
            violations.append(
                f"Feller condition fails under Q: 2*mu_q*theta_q = {2 * model.mu_q * model.theta_q:.6g} < sigma^2 = {sigma2:.6g}")
    return violations


def _check_domain(model, s, allow_zero):
    s = np.asarray(s, dtype=float)
    if model.kind == ModelKind.OU:
        return s
    bad = s < 0 if allow_zero else s <= 0
    if np.any(bad):
        bound = "non-negative" if allow_zero else "positive"
        raise ModelDomainError(f"{model.kind.value} spot must be {bound} (got {s[bad].min() if s.ndim else s})")
    return s


def _as_output(value):
    return float(value) if np.ndim(value) == 0 else value


def drift(model, measure, s):
    """Drift of the spot SDE under the given measure."""
    s = _check_domain(model, s, allow_zero=False)
    m, th = model.params(measure)
    if model.kind == ModelKind.XOU:
        return _as_output(m * (th - np.log(s)) * s)
    return _as_output(m * (th - s))


def diffusion(model, s):
    """Volatility coefficient of the spot SDE (identical under P and Q)."""
    s = _check_domain(model, s, allow_zero=model.kind == ModelKind.CIR)
    if model.kind == ModelKind.OU:
        return _as_output(np.full_like(s, model.sigma))
    if model.kind == ModelKind.CIR:
        return _as_output(model.sigma * np.sqrt(s))
    return _as_output(model.sigma * s)


def conditional_mean(model, measure, s0, t):
    """E{S_t | S_0 = s0} in closed form."""
    m, th = model.params(measure)
    decay = np.exp(-m * t)
    if model.kind == ModelKind.XOU:
        log_mean = decay * np.log(s0) + (1 - decay) * (th - model.sigma ** 2 / (2 * m))
        log_var = model.sigma ** 2 * (1 - decay ** 2) / (2 * m)
        return float(np.exp(log_mean + log_var / 2))
    return float(th + (s0 - th) * decay)


def conditional_variance(model, measure, s0, t):
    """Var{S_t | S_0 = s0} in closed form."""
    m, th = model.params(measure)
    decay = np.exp(-m * t)
    sigma2 = model.sigma ** 2
    if model.kind == ModelKind.OU:
        return float(sigma2 * (1 - decay ** 2) / (2 * m))
    if model.kind == ModelKind.CIR:
        return float(s0 * sigma2 * decay * (1 - decay) / m + th * sigma2 * (1 - decay) ** 2 / (2 * m))
    log_var = sigma2 * (1 - decay ** 2) / (2 * m)
    return float(conditional_mean(model, measure, s0, t) ** 2 * np.expm1(log_var))


def simulate(model, measure, request, rng=None):
    """Simulate spot paths.

    OU and XOU use their exact Gaussian transitions (XOU in log space); CIR uses
    full-truncation Euler, which is biased at order dt, so keep dt <= 1/1000
    when the paths serve as an oracle.
    """
    if request.dt <= 0 or request.n_steps < 1 or request.n_paths < 1:
        raise ParameterError(
            f"invalid path request: dt={request.dt}, n_steps={request.n_steps}, n_paths={request.n_paths}")
    _check_domain(model, request.s0, allow_zero=False)
    rng = np.random.default_rng(request.seed) if rng is None else rng
    m, th = model.params(measure)
    dt, sigma = request.dt, model.sigma
    values = np.empty((request.n_paths, request.n_steps + 1))
    values[:, 0] = request.s0

    if model.kind == ModelKind.CIR:
        state = np.full(request.n_paths, float(request.s0))
        sqrt_dt = np.sqrt(dt)
        for k in range(1, request.n_steps + 1):
            positive = np.maximum(state, 0.0)
            noise = rng.standard_normal(request.n_paths)
            state = state + m * (th - positive) * dt + sigma * np.sqrt(positive) * sqrt_dt * noise
            values[:, k] = np.maximum(state, 0.0)
        return PathSet(request.s0, dt, request.n_steps, request.n_paths, request.seed, values)

    decay = np.exp(-m * dt)
    step_sd = sigma * np.sqrt((1 - decay ** 2) / (2 * m))
    if model.kind == ModelKind.XOU:
        level = th - sigma ** 2 / (2 * m)
        state = np.full(request.n_paths, np.log(request.s0))
    else:
        level = th
        state = np.full(request.n_paths, float(request.s0))
    for k in range(1, request.n_steps + 1):
        state = level + (state - level) * decay + step_sd * rng.standard_normal(request.n_paths)
        values[:, k] = state
    if model.kind == ModelKind.XOU:
        values[:, 1:] = np.exp(values[:, 1:])
    return PathSet(request.s0, dt, request.n_steps, request.n_paths, request.seed, values)


def terminal_samples(model, measure, s0, horizon, n_paths, seed=0):
    """Exact draws of S at a single horizon (OU/XOU); CIR falls back to fine Euler paths."""
    rng = np.random.default_rng(seed)
    m, th = model.params(measure)
    if model.kind == ModelKind.CIR:
        n_steps = max(1, int(np.ceil(horizon * 2520)))
        request = PathRequest(s0, horizon / n_steps, n_steps, n_paths, seed)
        return simulate(model, measure, request, rng=rng).values[:, -1]
    decay = np.exp(-m * horizon)
    sd = model.sigma * np.sqrt((1 - decay ** 2) / (2 * m))
    noise = rng.standard_normal(n_paths)
    if model.kind == ModelKind.XOU:
        level = th - model.sigma ** 2 / (2 * m)
        return np.exp(level + (np.log(s0) - level) * decay + sd * noise)
    return th + (s0 - th) * decay + sd * noise
