"""Crank-Nicolson / projected SOR solver for the futures trading problems.

Every problem is a variational inequality max{L g, xi - g} = 0 on [0, T_hat]
with terminal condition g(T_hat, s) = xi(T_hat, s). The long-short pair (V, J),
the short-long pair (U, K) and the chooser P are solved in sequence, each
later obstacle read off an earlier surface.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from multiprocessing import Pool

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from logic.errors import ConvergenceError, ModelDomainError, ParameterError
from logic.models import Measure, ModelKind
from logic.pricing import futures_price

logger = logging.getLogger(__name__)

GENERATORS = ("historical", "printed")
BOUNDARY_TOL_FACTOR = 10.0
ORDERING_RTOL = 1e-6


class Problem(str, Enum):
    V = "V"
    J = "J"
    U = "U"
    K = "K"
    P = "P"


class Sense(str, Enum):
    MAX = "max"
    MIN = "min"


class Side(str, Enum):
    EXERCISE_ABOVE = "exercise_above"
    EXERCISE_BELOW = "exercise_below"


@dataclass(frozen=True)
class GridSpec:
    """Uniform (time, spot) grid and PSOR controls; blank spot bounds mean model defaults."""

    n_time: int = 500
    n_space: int = 500
    s_min: object = None
    s_max: object = None
    omega: float = 1.2
    epsilon: float = 1e-8
    max_iter: int = 10000
    generator: str = "historical"

    def __post_init__(self):
        if int(self.n_time) < 2 or int(self.n_space) < 2:
            raise ParameterError(f"grid needs at least 2 steps per axis (got N={self.n_time}, M={self.n_space})")
        if not 0 < self.omega < 2:
            raise ParameterError(f"relaxation omega must lie in (0, 2) (got {self.omega})")
        if self.epsilon <= 0:
            raise ParameterError(f"tolerance epsilon must be positive (got {self.epsilon})")
        if int(self.max_iter) < 1:
            raise ParameterError(f"max_iter must be at least 1 (got {self.max_iter})")
        if self.generator not in GENERATORS:
            raise ParameterError(f"generator must be one of {GENERATORS} (got {self.generator!r})")
        if self.s_min is not None and self.s_max is not None and self.s_min >= self.s_max:
            raise ParameterError(f"s_min must be below s_max (got {self.s_min}, {self.s_max})")
        object.__setattr__(self, "n_time", int(self.n_time))
        object.__setattr__(self, "n_space", int(self.n_space))
        object.__setattr__(self, "max_iter", int(self.max_iter))

    @classmethod
    def default_for(cls, model, **overrides):
        return cls(**overrides).resolved(model)

    def resolved(self, model):
        """Copy with s_min and s_max filled from the model when left blank."""
        spread = 6 * model.sigma / math.sqrt(2 * model.mu_q)
        s_max = self.s_max
        if s_max is None:
            if model.kind == ModelKind.OU:
                s_max = model.theta_q + spread
            elif model.kind == ModelKind.CIR:
                s_max = 4 * model.theta_q
            else:
                s_max = math.exp(model.theta_q + spread)
        s_min = self.s_min
        if s_min is None:
            s_min = s_max / (self.n_space + 1) if model.kind == ModelKind.XOU else 0.0
        if model.kind == ModelKind.CIR and s_min < 0:
            raise ParameterError(f"cir grid cannot start below zero (got s_min={s_min})")
        if model.kind == ModelKind.XOU and s_min <= 0:
            raise ParameterError(f"xou grid must start above zero (got s_min={s_min})")
        if s_min >= s_max:
            raise ParameterError(f"s_min must be below s_max (got {s_min}, {s_max})")
        return replace(self, s_min=float(s_min), s_max=float(s_max))

    @property
    def ds(self):
        return (self.s_max - self.s_min) / self.n_space

    @property
    def measure(self):
        return Measure.RISK_NEUTRAL if self.generator == "printed" else Measure.HISTORICAL

    def spots(self):
        return self.s_min + self.ds * np.arange(self.n_space + 1)

    def times(self, horizon):
        return np.linspace(0.0, horizon, self.n_time + 1)


def validate_grid(grid, model):
    try:
        grid.resolved(model)
    except ParameterError as exc:
        return [str(exc)]
    return []


@dataclass(frozen=True)
class TridiagonalSystem:
    """Rows i = 1..M-1 of a tridiagonal operator.

    lower[0] and upper[-1] couple the first and last interior rows to the
    pinned boundary nodes; they are kept for the right-hand side and left out
    of the matrix itself.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __len__(self):
        return len(self.diag)

    def matvec(self, x):
        out = self.diag * x
        out[1:] += self.lower[1:] * x[:-1]
        out[:-1] += self.upper[:-1] * x[1:]
        return out

    def banded(self):
        ab = np.zeros((3, len(self)))
        ab[0, 1:] = self.upper[:-1]
        ab[1] = self.diag
        ab[2, :-1] = self.lower[1:]
        return ab

    def solve(self, rhs):
        return solve_banded((1, 1), self.banded(), rhs)

    def is_diagonally_dominant(self):
        off = np.zeros(len(self))
        off[1:] += np.abs(self.lower[1:])
        off[:-1] += np.abs(self.upper[:-1])
        return bool(np.all(np.abs(self.diag) > off))


@dataclass(frozen=True)
class ValueSurface:
    """Solved g and its obstacle, both indexed [spot i, time j]."""

    problem: Problem
    sense: Sense
    spots: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    obstacle: np.ndarray = field(repr=False)
    sweeps: int = 0
    residual: float = 0.0
    tolerance: float = 1e-7
    # "long" / "short" / "" per node, chooser only
    branch: object = field(default=None, repr=False)

    @property
    def excess(self):
        """Distance from the obstacle on the continuation side (zero where exercised)."""
        if self.sense == Sense.MIN:
            return self.obstacle - self.values
        return self.values - self.obstacle

    def value_at(self, t, s):
        return _interpolate(self.spots, self.times, self.values, t, s)

    def excess_at(self, t, s):
        return _interpolate(self.spots, self.times, self.excess, t, s)


def _interpolate(spots, times, table, t, s):
    if not (spots[0] <= s <= spots[-1] and times[0] <= t <= times[-1]):
        raise ModelDomainError(f"point (t={t}, s={s}) lies outside the solved grid")
    return float(RegularGridInterpolator((spots, times), table)([[s, t]])[0])


@dataclass(frozen=True)
class BoundarySet:
    times: tuple
    levels: tuple
    side: Side

    def as_array(self):
        return np.array([np.nan if level is None else level for level in self.levels])

    def present(self):
        return [(t, level) for t, level in zip(self.times, self.levels) if level is not None]


@dataclass(frozen=True)
class TradeBoundaries:
    long_entry: BoundarySet
    long_exit: BoundarySet
    short_entry: BoundarySet
    short_exit: BoundarySet
    chooser_long: BoundarySet
    chooser_short: BoundarySet

    def ordering_violations(self, tol=0.0, rtol=ORDERING_RTOL):
        """Times where two boundaries that both exist come in the wrong order.

        Levels closer than tol + rtol * (1 + |level|) count as equal.
        """
        checks = (
            ("long_entry", self.long_entry, "long_exit", self.long_exit),
            ("short_exit", self.short_exit, "short_entry", self.short_entry),
            ("chooser_long", self.chooser_long, "long_entry", self.long_entry),
            ("short_entry", self.short_entry, "chooser_short", self.chooser_short),
        )
        violations = []
        for low_name, low, high_name, high in checks:
            for t, a, b in zip(low.times, low.levels, high.levels):
                if a is not None and b is not None and a > b + tol + rtol * (1 + abs(b)):
                    violations.append(f"t={t:.6g}: {low_name} {a:.6g} above {high_name} {b:.6g}")
        return violations


@dataclass(frozen=True)
class TradeSolution:
    surfaces: dict
    boundaries: TradeBoundaries


def generator_coefficients(model, measure, s, printed=False):
    """Drift phi(s) and squared diffusion sigma^2(s) of the pricing operator.

    printed=True drops the factor s from the XOU drift, as in the risk-neutral
    operators written without it.
    """
    s = np.asarray(s, dtype=float)
    m, th = model.params(measure)
    sigma2 = model.sigma ** 2
    if model.kind == ModelKind.OU:
        return m * (th - s), sigma2 * np.ones_like(s)
    if model.kind == ModelKind.CIR:
        if np.any(s < 0):
            raise ModelDomainError("cir generator is undefined below zero")
        return m * (th - s), sigma2 * s
    if np.any(s <= 0):
        raise ModelDomainError("xou generator needs a positive spot")
    phi = m * (th - np.log(s))
    return (phi if printed else phi * s), sigma2 * s ** 2


def assemble_cn(model, measure, grid, contract):
    """Implicit (M1) and explicit (M2) Crank-Nicolson operators on interior nodes."""
    grid = grid.resolved(model)
    ds = grid.ds
    dt = contract.deadline / grid.n_time
    interior = grid.spots()[1:-1]
    phi, var = generator_coefficients(model, measure, interior, printed=grid.generator == "printed")
    alpha = dt / (4 * ds) * (var / ds - phi)
    beta = -dt / 2 * (contract.rate + var / ds ** 2)
    gamma = dt / (4 * ds) * (var / ds + phi)
    m1 = TridiagonalSystem(-alpha, 1 - beta, -gamma)
    m2 = TridiagonalSystem(alpha.copy(), 1 + beta, gamma.copy())
    return m1, m2


def _psor(system, rhs, obstacle, omega, epsilon, max_iter, initial):
    n = len(rhs)
    lower, diag, upper = system.lower.tolist(), system.diag.tolist(), system.upper.tolist()
    r, xi = list(map(float, rhs)), list(map(float, obstacle))
    g = np.maximum(initial, obstacle).tolist()
    change = math.inf
    for sweep in range(1, max_iter + 1):
        change = 0.0
        for i in range(n):
            acc = r[i] - diag[i] * g[i]
            if i > 0:
                acc -= lower[i] * g[i - 1]
            if i < n - 1:
                acc -= upper[i] * g[i + 1]
            new = g[i] + omega * acc / diag[i]
            if new < xi[i]:
                new = xi[i]
            change += (new - g[i]) ** 2
            g[i] = new
        if math.sqrt(change) < epsilon:
            return np.array(g), sweep
    raise ConvergenceError(f"projected SOR did not converge in {max_iter} sweeps",
                           max_iter, math.sqrt(change))


def psor_solve(system, rhs, obstacle, omega=1.2, epsilon=1e-8, max_iter=10000, initial=None):
    """Solve the LCP g >= xi, M1 g - rhs >= 0, (g - xi)(M1 g - rhs) = 0 by projected SOR."""
    rhs = np.asarray(rhs, dtype=float)
    obstacle = np.asarray(obstacle, dtype=float)
    if rhs.shape != obstacle.shape or len(rhs) != len(system):
        raise ParameterError("system, right-hand side and obstacle must have the same length")
    if not system.is_diagonally_dominant():
        logger.warning("PSOR matrix is not strictly diagonally dominant; convergence is not guaranteed")
    if initial is None:
        initial = system.solve(rhs)
    values, _ = _psor(system, rhs, obstacle, omega, epsilon, max_iter, initial)
    return values


def complementarity_residual(system, rhs, values, obstacle):
    """max_i |min((M1 g - rhs)_i / (M1)_ii, g_i - xi_i)|"""
    scaled = (system.matvec(np.asarray(values, dtype=float)) - rhs) / system.diag
    return float(np.max(np.abs(np.minimum(scaled, values - obstacle))))


def _obstacle_table(obstacle, times, spots):
    if callable(obstacle):
        table = np.column_stack([np.asarray(obstacle(t, spots), dtype=float) for t in times])
    else:
        table = np.asarray(obstacle, dtype=float)
    if table.shape != (len(spots), len(times)):
        raise ParameterError(f"obstacle has shape {table.shape}, grid needs {(len(spots), len(times))}")
    if not np.all(np.isfinite(table)):
        raise ParameterError("obstacle must be finite on the grid")
    return table


def solve_vi(model, contract, grid, obstacle, sense=Sense.MAX, problem=Problem.V, measure=None):
    """Backward Crank-Nicolson induction with one PSOR solve per time step.

    obstacle is xi(t, spots) or a precomputed [spot, time] table. Min problems
    are solved as max problems for -g against -xi. The rows at s_min and s_max
    are pinned to the obstacle.
    """
    grid = grid.resolved(model)
    measure = grid.measure if measure is None else measure
    spots, times = grid.spots(), grid.times(contract.deadline)
    xi = _obstacle_table(obstacle, times, spots)
    m1, m2 = assemble_cn(model, measure, grid, contract)
    if not m1.is_diagonally_dominant():
        logger.warning("%s: PSOR matrix is not strictly diagonally dominant; convergence is not guaranteed",
                       problem.value)

    sign = -1.0 if sense == Sense.MIN else 1.0
    n, last = grid.n_time, grid.n_space
    w = np.empty_like(xi)
    w[:, n] = sign * xi[:, n]
    total_sweeps, worst = 0, 0.0
    logger.info("solving %s on a %dx%d grid over [0, %g]", problem.value, last, n, contract.deadline)
    for j in range(n, 0, -1):
        w[0, j - 1] = sign * xi[0, j - 1]
        w[last, j - 1] = sign * xi[last, j - 1]
        rhs = m2.matvec(w[1:last, j])
        rhs[0] += m2.lower[0] * (w[0, j - 1] + w[0, j])
        rhs[-1] += m2.upper[-1] * (w[last, j - 1] + w[last, j])
        lower_obstacle = sign * xi[1:last, j - 1]
        try:
            g, sweeps = _psor(m1, rhs, lower_obstacle, grid.omega, grid.epsilon, grid.max_iter, m1.solve(rhs))
        except ConvergenceError as exc:
            raise ConvergenceError(f"{problem.value}: projected SOR did not converge at time step {j - 1}",
                                   exc.iterations, exc.residual, step=j - 1) from exc
        w[1:last, j - 1] = g
        total_sweeps += sweeps
        worst = max(worst, complementarity_residual(m1, rhs, g, lower_obstacle))
        logger.debug("%s step %d: %d sweeps", problem.value, j - 1, sweeps)

    logger.info("%s solved: %d sweeps, residual %.3e", problem.value, total_sweeps, worst)
    return ValueSurface(problem, Sense(sense), spots, times, sign * w, xi, total_sweeps, worst,
                        BOUNDARY_TOL_FACTOR * grid.epsilon)


def _futures_table(model, contract, spots, times):
    return np.column_stack([futures_price(model, t, spots, contract.maturity) for t in times])


def solve_long_short(model, contract, grid):
    """V (exit a long) then J (enter long, knowing V awaits)."""
    grid = grid.resolved(model)
    spots, times = grid.spots(), grid.times(contract.deadline)
    futures = _futures_table(model, contract, spots, times)
    v = solve_vi(model, contract, grid, futures - contract.cost, Sense.MAX, Problem.V)
    j = solve_vi(model, contract, grid, np.maximum(v.values - (futures + contract.cost_hat), 0.0),
                 Sense.MAX, Problem.J)
    return v, j


def solve_short_long(model, contract, grid):
    """U (close a short, minimum cost) then K (enter short, knowing U awaits)."""
    grid = grid.resolved(model)
    spots, times = grid.spots(), grid.times(contract.deadline)
    futures = _futures_table(model, contract, spots, times)
    u = solve_vi(model, contract, grid, futures + contract.cost_hat, Sense.MIN, Problem.U)
    k = solve_vi(model, contract, grid, np.maximum((futures - contract.cost) - u.values, 0.0),
                 Sense.MAX, Problem.K)
    return u, k


def extract_boundary(surface, side, require_positive_obstacle=False, mask=None, tol=None):
    """Exercise boundary per time step, scanning inward from the exercise-side edge.

    A node is exercised when excess <= tol * (1 + |xi|) (and mask allows it).
    Continuation nodes next to the edge are skipped; the level is interpolated
    between the last node of the first exercised run and the continuation node
    after it. None when no interior node is exercised; the far edge when the
    run reaches it. The terminal step is left out since every node binds there.
    """
    tol = surface.tolerance if tol is None else tol
    spots = surface.spots
    last = len(spots) - 1
    gap = surface.excess - tol * (1 + np.abs(surface.obstacle))
    exercised = gap <= 0
    if require_positive_obstacle:
        exercised &= surface.obstacle > 0
    if mask is not None:
        exercised &= mask
    if side == Side.EXERCISE_BELOW:
        order, edge = np.arange(1, last), spots[-1]
    else:
        order, edge = np.arange(last - 1, 0, -1), spots[0]

    levels = []
    for j in range(len(surface.times) - 1):
        column = exercised[order, j]
        if not column.any():
            levels.append(None)
            continue
        start = int(np.argmax(column))
        if column[start:].all():
            levels.append(float(edge))
            continue
        k = start + int(np.argmin(column[start:]))
        a, b = order[k - 1], order[k]
        za, zb = gap[a, j], gap[b, j]
        # a masked neighbour has no gap crossing to interpolate
        if zb > 0:
            weight = min(max(-za / (zb - za), 0.0), 1.0)
            levels.append(float(spots[a] + weight * (spots[b] - spots[a])))
        else:
            levels.append(float(spots[a]))
    return BoundarySet(tuple(float(t) for t in surface.times[:-1]), tuple(levels), Side(side))


def solve_chooser(model, contract, grid, v, u, j=None, k=None):
    """P with obstacle max{A, B}, A = (V - (f + c_hat))+, B = ((f - c) - U)+.

    Exercised nodes are labelled long where A >= B and short otherwise. J and
    K are solved from V and U when not supplied.
    """
    grid = grid.resolved(model)
    spots, times = grid.spots(), grid.times(contract.deadline)
    futures = _futures_table(model, contract, spots, times)
    enter_long = np.maximum(v.values - (futures + contract.cost_hat), 0.0)
    enter_short = np.maximum((futures - contract.cost) - u.values, 0.0)
    obstacle = np.maximum(enter_long, enter_short)
    branch = np.where(obstacle > 0, np.where(enter_long >= enter_short, "long", "short"), "")
    p = solve_vi(model, contract, grid, obstacle, Sense.MAX, Problem.P)
    p = replace(p, branch=branch)

    if j is None:
        j = solve_vi(model, contract, grid, enter_long, Sense.MAX, Problem.J)
    if k is None:
        k = solve_vi(model, contract, grid, enter_short, Sense.MAX, Problem.K)
    boundaries = TradeBoundaries(
        long_entry=extract_boundary(j, Side.EXERCISE_BELOW, require_positive_obstacle=True),
        long_exit=extract_boundary(v, Side.EXERCISE_ABOVE),
        short_entry=extract_boundary(k, Side.EXERCISE_ABOVE, require_positive_obstacle=True),
        short_exit=extract_boundary(u, Side.EXERCISE_BELOW),
        chooser_long=extract_boundary(p, Side.EXERCISE_BELOW, require_positive_obstacle=True,
                                      mask=branch == "long"),
        chooser_short=extract_boundary(p, Side.EXERCISE_ABOVE, require_positive_obstacle=True,
                                       mask=branch == "short"),
    )
    return p, boundaries


def _solve_pair(job):
    name, model, contract, grid = job
    if name == "long_short":
        return solve_long_short(model, contract, grid)
    return solve_short_long(model, contract, grid)


def solve_trade_boundaries(model, contract, grid, parallel=False):
    """Run V -> J, U -> K, then P and collect every surface with the boundaries."""
    grid = grid.resolved(model)
    jobs = [("long_short", model, contract, grid), ("short_long", model, contract, grid)]
    if parallel:
        with Pool(processes=2) as pool:
            (v, j), (u, k) = pool.map(_solve_pair, jobs)
    else:
        (v, j), (u, k) = [_solve_pair(job) for job in jobs]
    p, boundaries = solve_chooser(model, contract, grid, v, u, j, k)
    surfaces = {Problem.V: v, Problem.J: j, Problem.U: u, Problem.K: k, Problem.P: p}
    violations = boundaries.ordering_violations()
    if violations:
        logger.warning("boundary ordering broken at %d time steps, first: %s", len(violations), violations[0])
    return TradeSolution(surfaces, boundaries)
