"""Run configuration save/load functionality."""

import json
from pathlib import Path

from .models import ConfigError, RunConfig

__all__ = ["ConfigError", "load_run_config", "save_run_config"]


def save_run_config(config: RunConfig, path: str | Path) -> None:
    """Save a run configuration to a JSON file."""
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.to_dict(), f, indent=2, ensure_ascii=False)


def load_run_config(path: str | Path | None) -> RunConfig:
    """Load a run configuration from a JSON file; None gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg}, line {e.lineno})") from e
    return RunConfig.from_dict(data)
