import configparser
import logging
import os
from dataclasses import dataclass, field

from logic.errors import ConfigError
from logic.models import SpotModel
from logic.pricing import ContractSpec
from logic.roll_yield import RollSchedule
from logic.vi_solver import GridSpec

logger = logging.getLogger(__name__)

# Calendar
TRADING_DAYS = 252

# Exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NUMERICS = 4

# Solver defaults
DEFAULT_N_TIME = 500
DEFAULT_N_SPACE = 500
DEFAULT_OMEGA = 1.2
DEFAULT_EPSILON = 1e-8
DEFAULT_MAX_ITER = 10000

# Monte Carlo defaults
DEFAULT_SEED = 0
DEFAULT_N_PATHS = 100000
DEFAULT_DT = 1.0 / 2520

# CSV column orders
BOUNDARY_COLUMNS = ["time", "long_entry", "long_exit", "short_entry", "short_exit", "chooser_long", "chooser_short"]
SURFACE_COLUMNS = ["time", "spot", "V", "J", "U", "K", "P", "binding_branch"]
ROLL_COLUMNS = ["path_id", "time", "basis_return", "roll_adjustment", "total"]
CURVE_COLUMNS = ["maturity_days", "maturity_years", "price"]
PREMIUM_COLUMNS = ["time", "spot", "premium"]
PATH_COLUMNS = ["path_id", "step", "time", "spot"]

# Asset paths
ASSET_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "assets")
CONFIG_DIR = os.path.join(ASSET_DIR, "configs")

SECTIONS = ("model", "contract", "grid", "schedule", "simulation", "io")


def parse_years(value):
    """Read a time in years; 'Nd' means N trading days."""
    text = str(value).strip().lower()
    try:
        if text.endswith("d"):
            return float(text[:-1]) / TRADING_DAYS
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot read {value!r} as a time (years, or Nd for trading days)") from None


def parse_year_list(value):
    return [parse_years(item) for item in str(value).split(",") if item.strip()]


@dataclass(frozen=True)
class SimulationSettings:
    seed: int = DEFAULT_SEED
    n_paths: int = DEFAULT_N_PATHS
    dt: float = DEFAULT_DT
    s0: object = None
    horizon: object = None
    workers: int = 1


@dataclass(frozen=True)
class IoSettings:
    output_dir: str = "output"
    dump_surfaces: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: object = None
    contract: object = None
    grid: GridSpec = field(default_factory=GridSpec)
    schedule: object = None
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    io: IoSettings = field(default_factory=IoSettings)
    source: object = None

    @property
    def seed(self):
        return self.simulation.seed

    def require_model(self):
        if self.model is None:
            raise ConfigError("this command needs a [model] section")
        return self.model

    def require_contract(self):
        if self.contract is None:
            raise ConfigError("this command needs a [contract] section")
        return self.contract

    def require_schedule(self):
        if self.schedule is None:
            raise ConfigError("this command needs a [schedule] section with maturities")
        return self.schedule


def _apply_overrides(parser, overrides):
    for item in overrides or ():
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r} in override {item!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name.strip(), value.strip())


def _get(section, name, convert, default=None):
    raw = section.get(name, fallback=None) if section is not None else None
    if raw is None or raw.strip() == "":
        return default
    try:
        return convert(raw)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"[{section.name}] {name} = {raw!r} is not a valid value") from None


def _require(section, name, convert):
    value = _get(section, name, convert)
    if value is None:
        raise ConfigError(f"[{section.name}] is missing {name}")
    return value


def _read_model(section):
    if section is None:
        return None
    return SpotModel(
        _require(section, "kind", str),
        _require(section, "mu", float),
        _require(section, "theta", float),
        _require(section, "mu_q", float),
        _require(section, "theta_q", float),
        _require(section, "sigma", float),
    )


def _read_contract(section):
    if section is None:
        return None
    maturity = _require(section, "maturity", parse_years)
    return ContractSpec(
        maturity,
        _get(section, "deadline", parse_years, maturity),
        _require(section, "rate", float),
        _get(section, "cost", float, 0.0),
        _get(section, "cost_hat", float, 0.0),
    )


def _read_grid(section):
    if section is None:
        return GridSpec()
    return GridSpec(
        n_time=_get(section, "n_time", int, DEFAULT_N_TIME),
        n_space=_get(section, "n_space", int, DEFAULT_N_SPACE),
        s_min=_get(section, "s_min", float),
        s_max=_get(section, "s_max", float),
        omega=_get(section, "omega", float, DEFAULT_OMEGA),
        epsilon=_get(section, "epsilon", float, DEFAULT_EPSILON),
        max_iter=_get(section, "max_iter", int, DEFAULT_MAX_ITER),
        generator=_get(section, "generator", str, "historical").strip().lower(),
    )


def _read_bool(raw):
    text = raw.strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def load_run_config(path=None, overrides=()):
    """Read an INI run config, then apply section.key=value overrides on top."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        unknown = [name for name in parser.sections() if name not in SECTIONS]
        if unknown:
            raise ConfigError(f"unknown config sections {unknown} in {path}")
    _apply_overrides(parser, overrides)

    def section(name):
        return parser[name] if parser.has_section(name) else None

    maturities = _get(section("schedule"), "maturities", parse_year_list)
    sim = section("simulation")
    simulation = SimulationSettings(
        seed=_get(sim, "seed", int, DEFAULT_SEED),
        n_paths=_get(sim, "n_paths", int, DEFAULT_N_PATHS),
        dt=_get(sim, "dt", parse_years, DEFAULT_DT),
        s0=_get(sim, "s0", float),
        horizon=_get(sim, "horizon", parse_years),
        workers=_get(sim, "workers", int, 1),
    )
    io = IoSettings(
        output_dir=_get(section("io"), "output_dir", str, "output"),
        dump_surfaces=_get(section("io"), "dump_surfaces", _read_bool, False),
    )
    config = RunConfig(
        model=_read_model(section("model")),
        contract=_read_contract(section("contract")),
        grid=_read_grid(section("grid")),
        schedule=RollSchedule(tuple(maturities)) if maturities else None,
        simulation=simulation,
        io=io,
        source=path,
    )
    logger.debug("loaded run config from %s with %d overrides", path, len(overrides or ()))
    return config
