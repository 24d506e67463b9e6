"""Configuration management for sparse-gfa."""

import os
import copy
import logging
from pathlib import Path
from typing import Dict, Any, Optional

import yaml
from rich.console import Console
from rich.logging import RichHandler

from .exceptions import ConfigurationError
from .model import ModelConfig
from .gibbs import SamplingSchedule


class Config:
    """Configuration manager for sparse-gfa runs."""

    DEFAULT_CONFIG_DIR = Path.home() / ".sparse-gfa"
    DEFAULT_CONFIG_FILE = DEFAULT_CONFIG_DIR / "config.yaml"

    DEFAULT_CONFIG = {
        "model": {
            "K": 80,
            "a_pi": 1.0,
            "b_pi": 1.0,
            "a_alpha": 1e-3,
            "b_alpha": 1e-3,
            "a_tau": 1e-3,
            "b_tau": 1e-3,
            "center_columns": True,
            "scale_columns": False,
        },
        "sampling": {
            "n_chains": 10,
            "burn_in": 5000,
            "n_samples": 1000,
            "thinning": 5,
            "seed": 0,
            "jobs": 1,
        },
        "preprocessing": {
            "merge_replicates": True,
            "threshold": False,
            "n_up": 2000,
            "n_down": 2000,
        },
        "summary": {
            "activity_threshold": 0.5,
            "n_loadings": 30,
            "q_threshold": 0.05,
            "n_permutations": 10000,
            "match_threshold": 0.8,
        },
        "validation": {
            "min_length": 2,
            "max_length": 16,
            "n_draws": 1000,
        },
        "logging": {
            "level": "INFO",
            "file": None,
        },
    }

    def __init__(self, config_file: Optional[Path] = None):
        """Initialize configuration.

        Args:
            config_file: Path to configuration file. If None, uses default location.
        """
        self.config_file = Path(config_file) if config_file else self.DEFAULT_CONFIG_FILE
        self._config = copy.deepcopy(self.DEFAULT_CONFIG)
        self._load_config()

    def _load_config(self) -> None:
        """Load configuration from file and environment variables."""
        if self.config_file.exists():
            try:
                with open(self.config_file, "r") as f:
                    file_config = yaml.safe_load(f) or {}
                if not isinstance(file_config, dict):
                    raise ValueError("top level must be a mapping")
                self._merge_config(file_config)
            except Exception as e:
                raise ConfigurationError(
                    f"Failed to load config file {self.config_file}: {e}"
                )

        self._load_env_vars()

    def _merge_config(self, new_config: Dict[str, Any]) -> None:
        """Merge new configuration into existing config."""

        def merge_dicts(base: Dict[str, Any], new: Dict[str, Any]) -> None:
            for key, value in new.items():
                if (
                    key in base
                    and isinstance(base[key], dict)
                    and isinstance(value, dict)
                ):
                    merge_dicts(base[key], value)
                else:
                    base[key] = value

        merge_dicts(self._config, new_config)

    def _load_env_vars(self) -> None:
        """Load configuration from environment variables."""
        env_mappings = {
            "SPARSE_GFA_SEED": ["sampling", "seed"],
            "SPARSE_GFA_JOBS": ["sampling", "jobs"],
            "SPARSE_GFA_CHAINS": ["sampling", "n_chains"],
            "SPARSE_GFA_LOG_LEVEL": ["logging", "level"],
            "SPARSE_GFA_LOG_FILE": ["logging", "file"],
        }
        integer_vars = {"SPARSE_GFA_SEED", "SPARSE_GFA_JOBS", "SPARSE_GFA_CHAINS"}

        for env_var, config_path in env_mappings.items():
            value = os.getenv(env_var)
            if value is not None:
                converted_value: Any = value
                if env_var in integer_vars:
                    try:
                        converted_value = int(value)
                    except ValueError:
                        continue
                elif env_var == "SPARSE_GFA_LOG_LEVEL":
                    converted_value = value.upper()

                current: Dict[str, Any] = self._config
                for key in config_path[:-1]:
                    current = current.setdefault(key, {})
                current[config_path[-1]] = converted_value

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value using dot notation."""
        keys = key.split(".")
        current: Any = self._config

        for k in keys:
            if isinstance(current, dict) and k in current:
                current = current[k]
            else:
                return default

        return current

    def set(self, key: str, value: Any) -> None:
        """Set a configuration value using dot notation (used for CLI overrides)."""
        keys = key.split(".")
        current: Dict[str, Any] = self._config
        for k in keys[:-1]:
            current = current.setdefault(k, {})
        current[keys[-1]] = value

    def create_default_config(self) -> None:
        """Create a default configuration file."""
        self.config_file.parent.mkdir(parents=True, exist_ok=True)

        with open(self.config_file, "w") as f:
            yaml.dump(self.DEFAULT_CONFIG, f, default_flow_style=False, indent=2)

    def model_config(self) -> ModelConfig:
        """Build the typed model configuration."""
        section = self.get("model", {})
        try:
            return ModelConfig(
                K=int(section["K"]),
                a_pi=float(section["a_pi"]),
                b_pi=float(section["b_pi"]),
                a_alpha=float(section["a_alpha"]),
                b_alpha=float(section["b_alpha"]),
                a_tau=float(section["a_tau"]),
                b_tau=float(section["b_tau"]),
                center_columns=bool(section["center_columns"]),
                scale_columns=bool(section["scale_columns"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid 'model' section: {e}")

    def sampling_schedule(self) -> SamplingSchedule:
        """Build the typed sampling schedule."""
        section = self.get("sampling", {})
        try:
            return SamplingSchedule(
                n_chains=int(section["n_chains"]),
                burn_in=int(section["burn_in"]),
                n_samples=int(section["n_samples"]),
                thinning=int(section["thinning"]),
                seed=int(section["seed"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid 'sampling' section: {e}")

    @property
    def jobs(self) -> int:
        """Maximum number of chains run concurrently."""
        return int(self.get("sampling.jobs", 1))

    def validate(self) -> None:
        """Validate the configuration."""
        try:
            self.model_config().validate()
            self.sampling_schedule().validate()
        except ConfigurationError:
            raise
        except Exception as e:
            raise ConfigurationError(str(e))

        if self.jobs < 1:
            raise ConfigurationError("sampling.jobs must be at least 1")

        threshold = self.get("summary.activity_threshold")
        if not 0.0 <= float(threshold) <= 1.0:
            raise ConfigurationError("summary.activity_threshold must lie in [0, 1]")

        if self.get("validation.min_length") > self.get("validation.max_length"):
            raise ConfigurationError(
                "validation.min_length must not exceed validation.max_length"
            )


def configure_logging(
    level: str = "INFO", file: Optional[str] = None, console: Optional[Console] = None
) -> None:
    """Route library logging to a rich stderr handler and an optional file."""
    root = logging.getLogger("sparse_gfa")
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    root.setLevel(level.upper())
    root.addHandler(
        RichHandler(
            console=console or Console(stderr=True),
            show_path=False,
            rich_tracebacks=True,
        )
    )
    if file:
        file_handler = logging.FileHandler(file)
        file_handler.setFormatter(
            logging.Formatter("%(levelname)s %(name)s: %(message)s")
        )
        root.addHandler(file_handler)
