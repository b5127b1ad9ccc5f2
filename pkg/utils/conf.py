import logging
import logging.config
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from config import DEFAULT_SEED, DEFAULT_SIMS, DEFAULT_WORKERS, LOG_LEVEL, LOGGING_CONF_PATH
from services.types import ConfigError
from utils.file_system import FileSystemUtil

CONFIG_KEYS = ("graph", "undirected", "weights", "algos", "budgets", "sims", "seed", "delta", "out", "thresholds",
               "dataset", "workers", "record_wallclock", "weight_seed")


def setup_logging(level: Optional[str] = None, conf_path: Union[str, Path, None] = None):
    """Applies the dictConfig in conf/logging.yml, then the requested root level."""
    conf_path = Path(conf_path or LOGGING_CONF_PATH)
    if conf_path.exists():
        with open(conf_path, "r") as f:
            logging.config.dictConfig(yaml.safe_load(f))
    else:
        logging.basicConfig()
    logging.getLogger().setLevel((level or LOG_LEVEL).upper())


def default_settings() -> Dict[str, Any]:
    return {"sims": DEFAULT_SIMS, "seed": DEFAULT_SEED, "workers": DEFAULT_WORKERS}


def load_config(path: Union[str, Path, None] = None, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Merges environment defaults, a flat YAML config file and explicit overrides, in increasing priority.
    Overrides set to None are ignored so unset CLI flags never mask file keys.
    """
    settings = default_settings()
    if path is not None:
        try:
            data = FileSystemUtil.read_yaml_file(path)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read config file {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must hold a flat key: value mapping")
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"Unknown config keys {unknown}; known keys are {list(CONFIG_KEYS)}")
        settings.update(data)
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return settings
