import json
import os
from datetime import datetime, timezone

import pandas as pd

from logic.errors import ConfigError
from utils.config import TRADING_DAYS

FLOAT_FORMAT = "%.10g"


def ensure_dir(path):
    """Create the parent directory of an output file if needed."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    return path


def write_csv(frame, path, columns=None):
    """Write a frame with a header row; missing values become empty cells."""
    if columns is not None:
        frame = frame[columns]
    ensure_dir(path)
    frame.to_csv(path, index=False, na_rep="", float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_curve_csv(path):
    """Load (maturities in years, prices) from a maturity_days,price CSV."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise ConfigError(f"curve file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigError(f"cannot parse curve file {path}: {exc}") from None
    missing = {"maturity_days", "price"} - set(frame.columns)
    if missing:
        raise ConfigError(f"curve file {path} lacks columns {sorted(missing)}")
    frame = frame.dropna(subset=["maturity_days", "price"])
    return (frame["maturity_days"].to_numpy(dtype=float) / TRADING_DAYS,
            frame["price"].to_numpy(dtype=float))


def write_json(data, path):
    ensure_dir(path)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_sidecar(path, command, config_path, seed):
    """Timestamp and provenance next to a data file, keeping the data itself deterministic."""
    meta = {
        "command": command,
        "config": config_path,
        "data_file": os.path.basename(path),
        "seed": seed,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return write_json(meta, path + ".meta.json")


def model_fragment(model):
    """INI [model] section text for a fitted model."""
    return "\n".join([
        "[model]",
        f"kind = {model.kind.value}",
        f"mu = {model.mu:.10g}",
        f"theta = {model.theta:.10g}",
        f"mu_q = {model.mu_q:.10g}",
        f"theta_q = {model.theta_q:.10g}",
        f"sigma = {model.sigma:.10g}",
        "",
    ])
