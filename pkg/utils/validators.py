"""
Input validation utilities.

Parses and validates flat ``key=value`` run configuration files and the
argument ranges shared by the estimation library.
"""

import logging
import math
import os
from typing import Any, Dict

import numpy as np

from .exceptions import ConfigurationError, FileOperationError, ValidationError

logger = logging.getLogger(__name__)


KERNEL_KINDS = ("epanechnikov", "boxcar", "tricube")
CENTERING_MODES = ("per_observation", "at_target", "none")
GRAPH_KINDS = ("chain", "nearest_neighbor", "erdos_renyi", "scale_free")
PATH_KINDS = ("random_walk", "linear", "sin", "two_regime", "constant")
RATE_MODES = ("undersmoothed", "theorem")


class ConfigValidator:
    """
    Validates run configuration values.

    Every known key maps to ``(type, default)``; the type is one of ``int``,
    ``float``, ``bool``, ``str``, ``optional_float``, ``int_list``,
    ``float_list`` or ``str_list``. Values arriving as text are parsed first.
    """

    KNOWN_KEYS = {
        "seed": ("int", 0),
        # smoothing
        "kernel": ("str", "epanechnikov"),
        "c_h": ("float", 1.0),
        "grid_size": ("int", 51),
        "centering": ("str", "per_observation"),
        # penalty
        "lambda": ("optional_float", None),
        "lambda_count": ("int", 60),
        "lambda_multiplier": ("float", 1.0),
        # solvers
        "solver": ("str", "prisma"),
        "L_f": ("float", 0.1),
        "beta": ("float", 0.1),
        "beta_schedule": ("str", "constant"),
        "beta_final": ("float", 1e-3),
        "max_iter": ("int", 2000),
        "rel_tol": ("float", 1e-7),
        "step_tol": ("float", 1e-9),
        "tol_window": ("int", 3),
        "support_tol": ("float", 1e-4),
        "restart": ("bool", True),
        "screen": ("bool", False),
        "rho": ("float", 1.0),
        "admm_tol": ("float", 1e-6),
        "admm_max_iter": ("int", 5000),
        "admm_support_tol": ("float", 0.0),
        # inference
        "alpha": ("float", 0.025),
        "rate_mode": ("str", "undersmoothed"),
        # model selection and baselines
        "folds": ("int", 5),
        "cv_mode": ("str", "ccs"),
        "method": ("str", "ccs"),
        "tau": ("float", 0.5),
        # synthetic scenarios
        "graph_kind": ("str", "chain"),
        "graph_kinds": ("str_list", ["chain"]),
        "p": ("int", 20),
        "p_list": ("int_list", [10, 20]),
        "C_list": ("float_list", [5.0, 10.0, 20.0, 40.0]),
        "n": ("int", 500),
        "path_kind": ("str", "sin"),
        "pd_floor": ("float", 0.5),
        "replicates": ("int", 10),
        # ingestion
        "z_column": ("str", "z"),
        "log_returns": ("bool", False),
        "standardize": ("bool", False),
        # runtime
        "n_jobs": ("int", 1),
        "strict": ("bool", False),
        "log_level": ("str", "INFO"),
        "log_to_console": ("bool", True),
        "log_to_file": ("bool", False),
    }

    CHOICES = {
        "kernel": KERNEL_KINDS,
        "centering": CENTERING_MODES,
        "solver": ("prisma", "admm"),
        "beta_schedule": ("constant", "inverse_k"),
        "rate_mode": RATE_MODES,
        "cv_mode": ("ccs", "static_glasso"),
        "method": ("ccs", "glasso", "pointwise"),
        "graph_kind": GRAPH_KINDS,
        "path_kind": PATH_KINDS,
        "log_level": ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"),
    }

    # (lower bound, lower inclusive, upper bound, upper inclusive)
    RANGES = {
        "c_h": (0.0, False, math.inf, False),
        "grid_size": (2, True, math.inf, False),
        "lambda": (0.0, True, math.inf, False),
        "lambda_count": (2, True, math.inf, False),
        "lambda_multiplier": (0.0, False, math.inf, False),
        "L_f": (0.0, False, math.inf, False),
        "beta": (0.0, False, math.inf, False),
        "beta_final": (0.0, False, math.inf, False),
        "max_iter": (1, True, math.inf, False),
        "rel_tol": (0.0, False, math.inf, False),
        "step_tol": (0.0, False, math.inf, False),
        "tol_window": (1, True, math.inf, False),
        "support_tol": (0.0, True, math.inf, False),
        "rho": (0.0, False, math.inf, False),
        "admm_tol": (0.0, False, math.inf, False),
        "admm_max_iter": (1, True, math.inf, False),
        "admm_support_tol": (0.0, True, math.inf, False),
        "alpha": (0.0, False, 1.0, False),
        "folds": (2, True, math.inf, False),
        "tau": (0.0, True, 1.0, True),
        "p": (2, True, math.inf, False),
        "n": (1, True, math.inf, False),
        "pd_floor": (0.0, False, math.inf, False),
        "replicates": (1, True, math.inf, False),
        "n_jobs": (1, True, math.inf, False),
        "seed": (0, True, math.inf, False),
    }

    TRUE_WORDS = ("1", "true", "yes", "on")
    FALSE_WORDS = ("0", "false", "no", "off")

    @classmethod
    def defaults(cls) -> Dict[str, Any]:
        return {
            key: (list(default) if isinstance(default, list) else default)
            for key, (_, default) in cls.KNOWN_KEYS.items()
        }

    @classmethod
    def parse_value(cls, key: str, raw: Any, config_path: str = None) -> Any:
        """
        Converts a raw (usually textual) value to the key's declared type.

        Raises:
            ConfigurationError: Unknown key or unparsable value
        """
        if key not in cls.KNOWN_KEYS:
            raise ConfigurationError(
                f"Unknown configuration key: {key}", config_path=config_path, key=key
            )
        kind, _ = cls.KNOWN_KEYS[key]
        try:
            if not isinstance(raw, str):
                return cls._coerce(kind, raw)
            text = raw.strip()
            if kind == "optional_float":
                return None if text.lower() in ("", "none", "auto") else float(text)
            if kind == "int":
                return int(text)
            if kind == "float":
                return float(text)
            if kind == "bool":
                lowered = text.lower()
                if lowered in cls.TRUE_WORDS:
                    return True
                if lowered in cls.FALSE_WORDS:
                    return False
                raise ValueError(f"not a boolean: {text!r}")
            if kind == "str":
                return text
            items = [item.strip() for item in text.split(",") if item.strip()]
            if kind == "int_list":
                return [int(item) for item in items]
            if kind == "float_list":
                return [float(item) for item in items]
            return items
        except (TypeError, ValueError) as e:
            raise ConfigurationError(
                f"Invalid value for '{key}': {raw!r} ({e})",
                config_path=config_path,
                key=key,
            )

    @staticmethod
    def _coerce(kind: str, value: Any) -> Any:
        if kind == "optional_float":
            return None if value is None else float(value)
        if kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError(f"not a number: {value!r}")
            return float(value)
        if kind == "bool":
            if not isinstance(value, (bool, np.bool_)):
                raise ValueError(f"not a boolean: {value!r}")
            return bool(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError(f"not a string: {value!r}")
            return value
        values = list(value)
        if kind == "int_list":
            return [int(v) for v in values]
        if kind == "float_list":
            return [float(v) for v in values]
        return [str(v) for v in values]

    @classmethod
    def validate_config(
        cls, config: Dict[str, Any], config_path: str = None
    ) -> Dict[str, Any]:
        """
        Parses, range-checks and fills defaults for a configuration mapping.

        Returns:
            A complete configuration with every known key present
        """
        validated = cls.defaults()
        for key, raw in config.items():
            validated[key] = cls.parse_value(key, raw, config_path)

        for key, choices in cls.CHOICES.items():
            value = validated[key]
            if key == "log_level":
                value = value.upper()
                validated[key] = value
            if value not in choices:
                raise ConfigurationError(
                    f"Invalid value '{value}' for '{key}'. Must be one of: {list(choices)}",
                    config_path=config_path,
                    key=key,
                )

        for kind in validated["graph_kinds"]:
            if kind not in GRAPH_KINDS:
                raise ConfigurationError(
                    f"Invalid graph kind '{kind}' in 'graph_kinds'",
                    config_path=config_path,
                    key="graph_kinds",
                )

        for key, bounds in cls.RANGES.items():
            value = validated[key]
            if value is not None and not cls._in_range(value, bounds):
                raise ConfigurationError(
                    f"Value {value} for '{key}' is out of range",
                    config_path=config_path,
                    key=key,
                )

        for key in ("p_list", "C_list"):
            if not validated[key] or any(v <= 0 for v in validated[key]):
                raise ConfigurationError(
                    f"'{key}' must be a non-empty list of positive numbers",
                    config_path=config_path,
                    key=key,
                )

        return validated

    @staticmethod
    def _in_range(value: float, bounds) -> bool:
        low, low_inclusive, high, high_inclusive = bounds
        if not math.isfinite(value):
            return False
        above = value >= low if low_inclusive else value > low
        below = value <= high if high_inclusive else value < high
        return above and below

    @classmethod
    def read_config_file(cls, config_path: str) -> Dict[str, str]:
        """
        Reads a flat ``key=value`` file; ``#`` starts a comment.

        Returns:
            Raw (unparsed) values keyed by name

        Raises:
            FileOperationError: File missing or unreadable
            ConfigurationError: Malformed line or duplicate key
        """
        if not os.path.isfile(config_path):
            raise FileOperationError(
                f"Configuration file not found: {config_path}",
                file_path=config_path,
                operation="read",
            )
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                lines = f.readlines()
        except OSError as e:
            raise FileOperationError(
                f"Failed to read configuration file: {e}",
                file_path=config_path,
                operation="read",
            )

        raw: Dict[str, str] = {}
        for number, line in enumerate(lines, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigurationError(
                    f"Line {number} is not of the form key=value: {line.strip()!r}",
                    config_path=config_path,
                )
            key, value = (part.strip() for part in text.split("=", 1))
            if key in raw:
                raise ConfigurationError(
                    f"Duplicate configuration key '{key}' on line {number}",
                    config_path=config_path,
                    key=key,
                )
            raw[key] = value
        logger.debug(f"Read {len(raw)} configuration keys from {config_path}")
        return raw


def require_positive(value: float, field: str) -> float:
    if not (np.isfinite(value) and value > 0):
        raise ValidationError(f"{field} must be positive, got {value}", field=field, value=value)
    return float(value)


def require_nonnegative(value: float, field: str) -> float:
    if not (np.isfinite(value) and value >= 0):
        raise ValidationError(
            f"{field} must be non-negative, got {value}", field=field, value=value
        )
    return float(value)


def require_choice(value: str, choices, field: str) -> str:
    if value not in choices:
        raise ValidationError(
            f"{field} must be one of {list(choices)}, got {value!r}",
            field=field,
            value=value,
        )
    return value


def require_unit_interval(value: float, field: str, open_interval: bool = False) -> float:
    ok = 0.0 < value < 1.0 if open_interval else 0.0 <= value <= 1.0
    if not (np.isfinite(value) and ok):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ValidationError(
            f"{field} must lie in {bounds}, got {value}", field=field, value=value
        )
    return float(value)

