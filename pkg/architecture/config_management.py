# Run Configuration Management
# Layered run configuration: defaults < key=value file < command-line overrides

import hashlib
import json
import logging
import os
import shutil
from typing import Any, Dict, Iterator, Optional

from ccs.evaluation import ExperimentSettings
from ccs.local_moments import SmoothingConfig
from ccs.solvers import SolverConfig
from utils.exceptions import ConfigurationError, FileOperationError
from utils.validators import ConfigValidator

logger = logging.getLogger(__name__)

# Length of the hexadecimal configuration hash written into output headers
HASH_LENGTH = 16


class RunConfig:
    """
    Validated, immutable view of every configuration key.
    """

    def __init__(self, values: Dict[str, Any], source: Optional[str] = None):
        self._data = ConfigValidator.validate_config(values, source)
        self.source = source

    @classmethod
    def load(
        cls, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
    ) -> "RunConfig":
        """
        Merges the optional configuration file and the overrides over the defaults.

        Raises:
            FileOperationError: Configuration file missing or unreadable
            ConfigurationError: Unknown key or invalid value
        """
        values: Dict[str, Any] = {}
        if config_path:
            raw = ConfigValidator.read_config_file(config_path)
            values.update(
                {
                    key: ConfigValidator.parse_value(key, text, config_path)
                    for key, text in raw.items()
                }
            )
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        config = cls(values, config_path)
        logger.debug(
            f"Run configuration loaded (file={config_path}, overrides={sorted(overrides or {})}), "
            f"hash={config.config_hash()}"
        )
        return config

    def get(self, key: str, default: Any = None) -> Any:
        return self._data.get(key, default)

    def __getitem__(self, key: str) -> Any:
        try:
            return self._data[key]
        except KeyError:
            raise ConfigurationError(f"Unknown configuration key: {key}", key=key)

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def as_dict(self) -> Dict[str, Any]:
        return {
            key: (list(value) if isinstance(value, list) else value)
            for key, value in self._data.items()
        }

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        values = self.as_dict()
        values.update(overrides)
        return RunConfig(values, self.source)

    def config_hash(self) -> str:
        """First 16 hex digits of the SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self._data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:HASH_LENGTH]

    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(
            kernel=self["kernel"],
            c_h=self["c_h"],
            grid_size=self["grid_size"],
            centering=self["centering"],
        )

    def solver_config(self, lam: Optional[float] = None) -> SolverConfig:
        if lam is None:
            lam = self["lambda"] if self["lambda"] is not None else 0.0
        return SolverConfig(
            lam=float(lam),
            L_f=self["L_f"],
            beta=self["beta"],
            beta_schedule=self["beta_schedule"],
            beta_final=self["beta_final"],
            max_iter=self["max_iter"],
            rel_tol=self["rel_tol"],
            step_tol=self["step_tol"],
            support_tol=self["support_tol"],
            tol_window=self["tol_window"],
            restart=self["restart"],
            screen=self["screen"],
            rho=self["rho"],
            admm_tol=self["admm_tol"],
            admm_max_iter=self["admm_max_iter"],
            admm_support_tol=self["admm_support_tol"],
        )

    def experiment_settings(self, **overrides: Any) -> ExperimentSettings:
        """Bundles the keys the experiment drivers read."""
        settings = dict(
            smoothing=self.smoothing(),
            solver_config=self.solver_config(),
            solver=self["solver"],
            method=self["method"],
            replicates=self["replicates"],
            seed=self["seed"],
            tau=self["tau"],
            lambda_count=self["lambda_count"],
            lambda_multiplier=self["lambda_multiplier"],
            path_kind=self["path_kind"],
            pd_floor=self["pd_floor"],
            n_jobs=self["n_jobs"],
            strict=self["strict"],
        )
        settings.update(overrides)
        return ExperimentSettings(**settings)

    def save(self, config_path: str) -> None:
        """
        Writes every key as ``key=value`` through a temporary file.

        Raises:
            FileOperationError: Target not writable
        """
        temp_file = f"{config_path}.tmp"
        try:
            with open(temp_file, "w", encoding="utf-8", newline="\n") as f:
                f.write(f"# ccs run configuration, hash={self.config_hash()}\n")
                for key in ConfigValidator.KNOWN_KEYS:
                    f.write(f"{key}={format_value(self._data[key])}\n")
            shutil.move(temp_file, config_path)
        except OSError as e:
            if os.path.exists(temp_file):
                os.remove(temp_file)
            raise FileOperationError(
                f"Failed to save configuration: {e}", file_path=config_path, operation="write"
            )
        logger.debug(f"Configuration saved to {config_path}")


def format_value(value: Any) -> str:
    """Inverse of ``ConfigValidator.parse_value`` for every declared type."""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(format_value(item) for item in value)
    return str(value)
