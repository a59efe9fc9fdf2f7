"""Command-line front end: config loading, validation, dispatch and file output."""

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from logic.calibration import calibrate
from logic.errors import (CalibrationError, ConfigError, ConvergenceError, FuturesModelError, ModelDomainError,
                          ParameterError, ValidationError)
from logic.models import Measure, PathRequest, simulate, validate
from logic.premium import classify_liquidation, delayed_liquidation_premium_surface
from logic.pricing import (classify_term_structure, futures_diffusion_P, futures_drift_P, futures_drift_threshold,
                           futures_price, term_structure, validate_contract)
from logic.roll_yield import expected_roll_yield, monte_carlo_roll_yield
from logic.vi_solver import Problem, solve_trade_boundaries, validate_grid
from utils import helpers
from utils.config import (BOUNDARY_COLUMNS, CURVE_COLUMNS, EXIT_CONFIG, EXIT_NUMERICS, EXIT_OK, EXIT_VALIDATION,
                          PATH_COLUMNS, PREMIUM_COLUMNS, ROLL_COLUMNS, SURFACE_COLUMNS, TRADING_DAYS, load_run_config,
                          parse_year_list, parse_years)

logger = logging.getLogger(__name__)

EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ValidationError, EXIT_VALIDATION),
    (ParameterError, EXIT_VALIDATION),
    (CalibrationError, EXIT_VALIDATION),
    (ConvergenceError, EXIT_NUMERICS),
    (ModelDomainError, EXIT_NUMERICS),
    (OSError, EXIT_CONFIG),
    (ArithmeticError, EXIT_NUMERICS),
)


def _years(text):
    try:
        return parse_years(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="mean-reversion-futures",
                                     description="Futures pricing, roll yield and optimal trading under mean-reverting spot models.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run config")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--output", help="output file (defaults to a name under [io] output_dir)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check model, contract and grid")

    price = sub.add_parser("price", parents=[common], help="futures price and its P-dynamics at one point")
    price.add_argument("--t", type=_years, default=0.0)
    price.add_argument("--s", type=float, required=True)
    price.add_argument("--T", type=_years, required=True)

    curve = sub.add_parser("curve", parents=[common], help="term structure at t = 0")
    curve.add_argument("--s0", type=float, required=True)
    curve.add_argument("--maturities", help="comma list (Nd accepted); defaults to [schedule] maturities")

    cal = sub.add_parser("calibrate", parents=[common], help="fit risk-neutral parameters to a curve CSV")
    cal.add_argument("--curve", required=True, help="CSV with maturity_days,price")
    cal.add_argument("--s0", type=float, required=True)
    cal.add_argument("--kind", help="ou, cir or xou (defaults to [model] kind)")
    cal.add_argument("--sigma", type=float, help="hold sigma fixed (XOU)")

    roll = sub.add_parser("rollyield", parents=[common], help="expected or simulated cumulative roll yield")
    roll.add_argument("--s0", type=float)
    roll.add_argument("--t", type=_years, required=True)
    roll.add_argument("--simulate", action="store_true", help="Monte Carlo on P-paths instead of the closed form")
    roll.add_argument("--variance-form", choices=["printed", "exact"], default="printed")

    prem = sub.add_parser("premium", parents=[common], help="liquidation verdict and premium surface")
    prem.add_argument("--t", type=_years, default=0.0)
    prem.add_argument("--s0", type=float)
    prem.add_argument("--form", choices=["printed", "ito"], default="printed")
    prem.add_argument("--surface", action="store_true", help="also solve and write L(t, s) as CSV")

    bounds = sub.add_parser("boundaries", parents=[common], help="solve V, J, U, K, P and write the boundaries")
    bounds.add_argument("--parallel", action="store_true", help="solve V and U in two processes")

    sim = sub.add_parser("simulate", parents=[common], help="write simulated spot paths")
    sim.add_argument("--measure", choices=[m.value for m in Measure], default=Measure.HISTORICAL.value)
    sim.add_argument("--s0", type=float)
    sim.add_argument("--horizon", type=_years)
    sim.add_argument("--n-paths", type=int)
    return parser


def _output_path(args, config, default_name):
    return args.output or os.path.join(config.io.output_dir, default_name)


def _emit(data):
    print(json.dumps(data, sort_keys=True))


def _check(config, need_contract=False, need_grid=False):
    model = config.require_model()
    violations = validate(model)
    if need_contract:
        violations += validate_contract(config.require_contract())
    if need_grid:
        violations += validate_grid(config.grid, model)
    if violations:
        raise ValidationError(violations)
    return model


def cmd_validate(args, config):
    model = config.require_model()
    violations = validate(model)
    if config.contract is not None:
        violations += validate_contract(config.contract)
    violations += validate_grid(config.grid, model)
    _emit({"valid": not violations, "violations": violations})
    if violations:
        raise ValidationError(violations)
    return EXIT_OK


def cmd_price(args, config):
    model = _check(config)
    _emit({
        "price": futures_price(model, args.t, args.s, args.T),
        "drift_P": futures_drift_P(model, args.t, args.s, args.T),
        "diffusion_P": futures_diffusion_P(model, args.t, args.s, args.T),
        "drift_threshold": futures_drift_threshold(model).level,
    })
    return EXIT_OK


def cmd_curve(args, config):
    model = _check(config)
    if args.maturities:
        maturities = parse_year_list(args.maturities)
    else:
        maturities = list(config.require_schedule().maturities)
    curve = term_structure(model, args.s0, maturities)
    frame = pd.DataFrame({
        "maturity_days": np.round(np.array(curve.maturities) * TRADING_DAYS, 6),
        "maturity_years": curve.maturities,
        "price": curve.prices,
    })
    path = helpers.write_csv(frame, _output_path(args, config, "curve.csv"), CURVE_COLUMNS)
    helpers.write_sidecar(path, "curve", config.source, config.seed)
    _emit({"file": path, "regime": str(classify_term_structure(model, args.s0, maturities[-1]))})
    return EXIT_OK


def cmd_calibrate(args, config):
    kind = args.kind or (config.model.kind if config.model is not None else None)
    if kind is None:
        raise ConfigError("calibrate needs --kind or a [model] section")
    maturities, prices = helpers.read_curve_csv(args.curve)
    result = calibrate(kind, args.s0, (maturities, prices), sigma_fixed=args.sigma, base=config.model)
    violations = validate(result.params)
    fragment_path = _output_path(args, config, "calibrated.ini")
    helpers.ensure_dir(fragment_path)
    with open(fragment_path, "w") as f:
        f.write(helpers.model_fragment(result.params))
    report = {
        "kind": result.params.kind.value,
        "mu_q": result.params.mu_q,
        "theta_q": result.params.theta_q,
        "sigma": result.params.sigma,
        "sse": result.sse,
        "iterations": result.iterations,
        "converged": result.converged,
        "violations": violations,
    }
    helpers.write_json(report, os.path.splitext(fragment_path)[0] + ".json")
    _emit(report)
    return EXIT_OK


def cmd_rollyield(args, config):
    model = _check(config)
    schedule = config.require_schedule()
    s0 = args.s0 if args.s0 is not None else config.simulation.s0
    if s0 is None:
        raise ConfigError("rollyield needs --s0 or [simulation] s0")
    expected = expected_roll_yield(model, s0, schedule, args.t, variance_form=args.variance_form)
    if not args.simulate:
        _emit({"expected_roll_yield": expected, "t": args.t})
        return EXIT_OK

    sim = config.simulation
    result = monte_carlo_roll_yield(model, s0, schedule, args.t, sim.n_paths, sim.dt, seed=sim.seed,
                                    workers=sim.workers)
    parts = result.decomposition
    frame = pd.DataFrame({
        "path_id": np.arange(result.n_paths),
        "time": result.time,
        "basis_return": parts.basis_return,
        "roll_adjustment": parts.cumulative_roll_adjustment,
        "total": parts.total,
    })
    path = helpers.write_csv(frame, _output_path(args, config, "rollyield.csv"), ROLL_COLUMNS)
    helpers.write_sidecar(path, "rollyield", config.source, config.seed)
    summary = {"file": path, "mean": result.mean, "std_error": result.std_error, "n_paths": result.n_paths,
               "expected_roll_yield": expected}
    helpers.write_json(summary, os.path.splitext(path)[0] + "_summary.json")
    _emit(summary)
    return EXIT_OK


def cmd_premium(args, config):
    model = _check(config, need_contract=True, need_grid=args.surface)
    contract = config.contract
    advice = classify_liquidation(model, contract, args.t, s0=args.s0, form=args.form)
    report = {"verdict": advice.verdict.value, "box": list(advice.box), "n_positive": advice.n_positive,
              "n_negative": advice.n_negative, "min": advice.min_value, "max": advice.max_value}
    if args.surface:
        v, premium = delayed_liquidation_premium_surface(model, contract, config.grid)
        times, spots = np.meshgrid(v.times, v.spots)
        frame = pd.DataFrame({"time": times.ravel(), "spot": spots.ravel(), "premium": premium.ravel()})
        path = helpers.write_csv(frame, _output_path(args, config, "premium.csv"), PREMIUM_COLUMNS)
        helpers.write_sidecar(path, "premium", config.source, config.seed)
        report["file"] = path
    _emit(report)
    return EXIT_OK


def cmd_boundaries(args, config):
    model = _check(config, need_contract=True, need_grid=True)
    solution = solve_trade_boundaries(model, config.contract, config.grid, parallel=args.parallel)
    b = solution.boundaries
    frame = pd.DataFrame({
        "time": b.long_exit.times,
        "long_entry": b.long_entry.as_array(),
        "long_exit": b.long_exit.as_array(),
        "short_entry": b.short_entry.as_array(),
        "short_exit": b.short_exit.as_array(),
        "chooser_long": b.chooser_long.as_array(),
        "chooser_short": b.chooser_short.as_array(),
    })
    path = helpers.write_csv(frame, _output_path(args, config, "boundaries.csv"), BOUNDARY_COLUMNS)
    helpers.write_sidecar(path, "boundaries", config.source, config.seed)
    report = {"file": path, "ordering_violations": len(b.ordering_violations())}

    if config.io.dump_surfaces:
        s = solution.surfaces
        times, spots = np.meshgrid(s[Problem.V].times, s[Problem.V].spots)
        frame = pd.DataFrame({"time": times.ravel(), "spot": spots.ravel()})
        for name in ("V", "J", "U", "K", "P"):
            frame[name] = s[Problem(name)].values.ravel()
        frame["binding_branch"] = s[Problem.P].branch.ravel()
        surface_path = helpers.write_csv(frame, os.path.join(os.path.dirname(path), "surfaces.csv"), SURFACE_COLUMNS)
        helpers.write_sidecar(surface_path, "boundaries", config.source, config.seed)
        report["surfaces"] = surface_path
    _emit(report)
    return EXIT_OK


def cmd_simulate(args, config):
    model = _check(config)
    sim = config.simulation
    s0 = args.s0 if args.s0 is not None else sim.s0
    horizon = args.horizon if args.horizon is not None else sim.horizon
    if s0 is None or horizon is None:
        raise ConfigError("simulate needs s0 and horizon (flags or [simulation])")
    n_paths = args.n_paths or sim.n_paths
    n_steps = max(1, int(round(horizon / sim.dt)))
    paths = simulate(model, Measure(args.measure), PathRequest(s0, horizon / n_steps, n_steps, n_paths, sim.seed))
    frame = pd.DataFrame({
        "path_id": np.repeat(np.arange(n_paths), n_steps + 1),
        "step": np.tile(np.arange(n_steps + 1), n_paths),
        "time": np.tile(paths.times, n_paths),
        "spot": paths.values.ravel(),
    })
    path = helpers.write_csv(frame, _output_path(args, config, "paths.csv"), PATH_COLUMNS)
    helpers.write_sidecar(path, "simulate", config.source, config.seed)
    _emit({"file": path, "n_paths": n_paths, "n_steps": n_steps})
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "price": cmd_price,
    "curve": cmd_curve,
    "calibrate": cmd_calibrate,
    "rollyield": cmd_rollyield,
    "premium": cmd_premium,
    "boundaries": cmd_boundaries,
    "simulate": cmd_simulate,
}


def _exit_code(exc):
    for kind, code in EXIT_CODES:
        if isinstance(exc, kind):
            return code
    return EXIT_VALIDATION


def run(argv=None):
    """Parse argv, dispatch one subcommand and return its exit status."""
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_run_config(args.config, args.overrides)
        return COMMANDS[args.command](args, config)
    except Exception as exc:
        if not isinstance(exc, FuturesModelError):
            logger.debug("unexpected failure in %s", args.command, exc_info=True)
        code = _exit_code(exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
        return code
