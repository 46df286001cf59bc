"""Run configuration: JSON loading, validation and command-line overrides."""

import json
import logging
import math
import os
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError
from .models import RateModel, RunConfig, TwoSphereConfig

logger = logging.getLogger(__name__)

THREADS_ENV = "SPHEREGAP_THREADS"
OUTPUT_FORMATS = ("csv", "json")
LOG_CONVENTIONS = ("eps", "delta")

# Reference configuration used by `verify` when no geometry is given
REFERENCE_GEOMETRY = {"n": 3, "r1": 1.0, "r2": 2.0, "eps": 1e-3}

_KNOWN_KEYS = {f.name for f in fields(RunConfig)}


def _as_int(name: str, value: Any, minimum: int) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _as_positive(name: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value) or value <= 0.0:
        raise ConfigError(f"{name} must be finite and > 0, got {value}")
    return value


class ConfigManager:
    """Loads, validates and layers RunConfig values."""

    def __init__(self, config_path: Optional[Path] = None):
        """
        Initialize configuration manager.

        Args:
            config_path: Path to a JSON config file. If None, load() returns defaults.
        """
        self.config_path = Path(config_path) if config_path is not None else None

    def load(self) -> RunConfig:
        """
        Load and validate the configuration file.

        Keys starting with "_" are comments and ignored.

        Returns:
            Validated RunConfig.

        Raises:
            ConfigError: If the file is missing, malformed or has unknown or
                invalid fields.
        """
        if self.config_path is None:
            logger.info("No config file given. Using defaults.")
            return RunConfig()

        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {self.config_path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {self.config_path}: {e}")

        if not isinstance(data, dict):
            raise ConfigError(f"config file {self.config_path} must hold a JSON object")

        values = {key: value for key, value in data.items() if not key.startswith("_")}
        unknown = sorted(set(values) - _KNOWN_KEYS)
        if unknown:
            raise ConfigError(
                f"unknown config key(s) {', '.join(unknown)} in {self.config_path}; "
                f"valid keys: {', '.join(sorted(_KNOWN_KEYS))}"
            )

        config = self.validate(RunConfig(**values))
        logger.info(f"Loaded configuration from {self.config_path}")
        return config

    @staticmethod
    def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
        """
        Layer command-line values over a loaded configuration.

        Args:
            config: Base configuration.
            **overrides: RunConfig field values; None means "not given".

        Returns:
            New validated RunConfig.
        """
        unknown = sorted(set(overrides) - _KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown override(s): {', '.join(unknown)}")
        given = {key: value for key, value in overrides.items() if value is not None}
        if given:
            logger.debug(f"Command-line overrides: {given}")
        return ConfigManager.validate(replace(config, **given))

    @staticmethod
    def validate(config: RunConfig) -> RunConfig:
        """
        Coerce and check every field that is set.

        Geometry fields may still be None here; build_geometry requires them.

        Raises:
            ConfigError: Naming the first invalid field.
        """
        values: Dict[str, Any] = {}
        if config.n is not None:
            values["n"] = _as_int("n", config.n, 2)
        for name in ("r1", "r2", "eps"):
            value = getattr(config, name)
            if value is not None:
                values[name] = _as_positive(name, value)

        if not isinstance(config.eps_list, (list, tuple)):
            raise ConfigError(f"eps_list must be a list, got {config.eps_list!r}")
        values["eps_list"] = [_as_positive("eps_list", e) for e in config.eps_list]

        values["tol"] = _as_positive("tol", config.tol)
        if values["tol"] >= 1.0:
            raise ConfigError(f"tol must be < 1, got {config.tol}")
        values["seed"] = _as_int("seed", config.seed, 0)
        values["fit_threshold"] = _as_positive("fit_threshold", config.fit_threshold)
        values["max_charges"] = _as_int("max_charges", config.max_charges, 2)
        for name in ("polar_nodes", "azimuth_nodes", "pole_levels", "circle_nodes", "mc_samples"):
            values[name] = _as_int(name, getattr(config, name), 0 if name == "pole_levels" else 1)

        if config.output_format is not None and config.output_format not in OUTPUT_FORMATS:
            raise ConfigError(
                f"output_format must be one of {OUTPUT_FORMATS}, got {config.output_format!r}"
            )
        if config.log_convention not in LOG_CONVENTIONS:
            raise ConfigError(
                f"log_convention must be one of {LOG_CONVENTIONS}, got {config.log_convention!r}"
            )
        if config.model is not None:
            try:
                RateModel(config.model)
            except ValueError:
                valid = ", ".join(m.value for m in RateModel)
                raise ConfigError(f"Unknown model: {config.model!r}. Valid options: {valid}")

        return replace(config, **values)


def build_geometry(config: RunConfig, command: str) -> TwoSphereConfig:
    """
    TwoSphereConfig for a command; a sweep takes its first eps.

    `verify` without any geometry falls back to REFERENCE_GEOMETRY.

    Raises:
        ConfigError: Naming the first missing field.
    """
    geometry = {"n": config.n, "r1": config.r1, "r2": config.r2, "eps": config.eps}
    if command == "verify" and all(value is None for value in geometry.values()):
        logger.info(f"No geometry given; verifying the reference configuration {REFERENCE_GEOMETRY}")
        geometry = dict(REFERENCE_GEOMETRY)
    if command == "sweep":
        if not config.eps_list:
            raise ConfigError("missing required field 'eps_list' (give several --eps values)")
        geometry["eps"] = config.eps_list[0]
    for name in ("n", "r1", "r2", "eps"):
        if geometry[name] is None:
            raise ConfigError(f"missing required field '{name}'")
    return TwoSphereConfig(**geometry)


def sweep_workers() -> int:
    """
    Worker count for sweeps from SPHEREGAP_THREADS (default 1).

    Invalid values fall back to 1 with a warning.
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        workers = int(raw)
    except ValueError:
        logger.warning(f"Invalid {THREADS_ENV}={raw!r}, using 1 worker")
        return 1
    if workers < 1:
        logger.warning(f"{THREADS_ENV} must be >= 1, got {workers}; using 1 worker")
        return 1
    return min(workers, os.cpu_count() or 1)
