"""Custom initial profiles read from CSV."""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .grid import Grid
from .models import ConfigError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("y", "a0")


def read_profile(path: str | Path) -> pd.DataFrame:
    """Read a profile table with columns y, a0 (extra columns are ignored)."""
    try:
        df = pd.read_csv(path)
    except OSError as e:
        raise ConfigError(f"cannot read profile {path}: {e.strerror or e}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot parse profile {path}: {e}") from e
    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    df = df[list(REQUIRED_COLUMNS)].astype(float)
    if df.isna().any().any():
        raise ValueError(f"{path}: profile contains empty or non-numeric cells")
    return df


def profile_on_grid(df: pd.DataFrame, grid: Grid) -> np.ndarray:
    """Linear interpolation onto the grid nodes; zero past the last tabulated y."""
    y = df["y"].to_numpy()
    a0 = df["a0"].to_numpy()
    if len(y) < 2:
        raise ValueError("profile needs at least two rows")
    if np.any(np.diff(y) <= 0):
        raise ValueError("profile y values must be strictly increasing")
    if y[0] != 0:
        raise ValueError(f"profile must start at y = 0, starts at {y[0]}")
    if y[-1] < grid.y_max and a0[-1] != 0:
        logger.warning("profile ends at y=%g with a0=%g; padding with zeros up to y_max=%g", y[-1], a0[-1], grid.y_max)
    return np.interp(grid.nodes, y, a0, right=0.0)


def import_profile(path: str | Path, grid: Grid) -> np.ndarray:
    values = profile_on_grid(read_profile(path), grid)
    logger.info("imported profile %s (max a0 = %g)", path, float(np.max(values)))
    return values
