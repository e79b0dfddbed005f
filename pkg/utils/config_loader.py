"""Configuration loader for phi.

This module provides functionality to load and validate configuration
from YAML/JSON files with fallback to defaults.
"""

import os
import json
import logging
import yaml
import copy
from typing import Dict, Any, List, Optional

from config import DEFAULT_CONFIG_PATH

logger = logging.getLogger("phi.config")

EQUIVALENCE_MODES = ("strict", "modulo_trivial")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigLoader:
    """Load and manage phi configuration."""

    DEFAULT_CONFIG = {
        "numerics": {
            "sym_tol": 1e-12,
            "cluster_tol": 1e-8,
            "max_sweeps": 100
        },
        "orbits": {
            "fixed_tol": 1e-10,
            "max_iter": 10000,
            "confirmation_window": 5,
            "cycle_memory": 64,
            "escape_bound": 1e12,
            "probe_h": 1e-4
        },
        "iteration": {
            "epsilon": 1e-8,
            "cauchy_tol": 1e-4,
            "cauchy_window": 8,
            "max_stages": 100,
            "max_omega_limits": 3,
            "space_budget": 4096,
            "equivalence_mode": "modulo_trivial",
            "enforce_axioms": True
        },
        "semigroups": {
            "kernel_tol": 1e-10,
            "yosida_t0": 1.0,
            "yosida_max_power": 10000,
            "koopman_blocks": 4
        },
        "reporting": {
            "output_dir": "runs",
            "spectral_mapping_tol": 1e-6,
            "idempotence_tol": 1e-8,
            "unitary_tol": 1e-8
        },
        "logging": {
            "level": "INFO",
            "file": "phi.log",
            "max_size": 10485760,
            "backup_count": 5,
            "console_output": True,
            "colored_output": True
        }
    }

    REQUIRED_KEYS = [
        'numerics.sym_tol',
        'iteration.epsilon',
        'iteration.space_budget',
        'iteration.equivalence_mode',
        'reporting.output_dir'
    ]

    POSITIVE_KEYS = [
        'numerics.cluster_tol',
        'orbits.fixed_tol',
        'orbits.escape_bound',
        'orbits.probe_h',
        'iteration.epsilon',
        'iteration.cauchy_tol',
        'semigroups.kernel_tol',
        'semigroups.yosida_t0',
        'reporting.spectral_mapping_tol',
        'reporting.idempotence_tol',
        'reporting.unitary_tol'
    ]

    def __init__(self, config_path: Optional[str] = None):
        """Initialize the configuration loader.

        Args:
            config_path: Path to configuration file (YAML or JSON)
        """
        self.config_path = config_path
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)

        if config_path and os.path.exists(config_path):
            self.load_config(config_path)

    def load_config(self, config_path: str) -> Dict[str, Any]:
        """Load configuration from a file.

        Args:
            config_path: Path to the configuration file

        Returns:
            Dict containing the loaded configuration

        Raises:
            FileNotFoundError: If config file doesn't exist
            ValueError: If config file format is invalid
        """
        if not os.path.exists(config_path):
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                if config_path.endswith('.yaml') or config_path.endswith('.yml'):
                    loaded_config = yaml.safe_load(f)
                elif config_path.endswith('.json'):
                    loaded_config = json.load(f)
                else:
                    raise ValueError(f"Unsupported config file format: {config_path}")
        except yaml.YAMLError as e:
            raise ValueError(f"Invalid YAML in config file: {e}")
        except json.JSONDecodeError as e:
            raise ValueError(f"Invalid JSON in config file: {e}")

        if loaded_config is None:
            loaded_config = {}
        if not isinstance(loaded_config, dict):
            raise ValueError(f"Configuration file must contain a mapping: {config_path}")

        self.config = self._deep_merge(self.DEFAULT_CONFIG, loaded_config)
        self.config_path = config_path
        logger.info(f"Configuration loaded from: {config_path}")

        return self.config

    def _deep_merge(self, base: Dict, override: Dict) -> Dict:
        """Recursively merge two dictionaries.

        Args:
            base: Base dictionary (defaults)
            override: Override dictionary (user config)

        Returns:
            Merged dictionary
        """
        result = copy.deepcopy(base)

        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value

        return result

    def get(self, key_path: str, default: Any = None) -> Any:
        """Get configuration value using dot notation.

        Args:
            key_path: Configuration key path (e.g., 'iteration.epsilon')
            default: Default value if key not found

        Returns:
            Configuration value or default

        Examples:
            >>> config.get('iteration.max_stages')
            100
            >>> config.get('nonexistent.key', 'default')
            'default'
        """
        keys = key_path.split('.')
        value = self.config

        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default

        return value

    def set(self, key_path: str, value: Any) -> None:
        """Set configuration value using dot notation.

        Args:
            key_path: Configuration key path (e.g., 'iteration.epsilon')
            value: Value to set
        """
        keys = key_path.split('.')
        config = self.config

        for key in keys[:-1]:
            if key not in config or not isinstance(config[key], dict):
                config[key] = {}
            config = config[key]

        config[keys[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        """Return a copy of one top-level section."""
        return copy.deepcopy(self.config.get(name, {}))

    def save(self, output_path: str) -> None:
        """Save current configuration to a file.

        Args:
            output_path: Path to save the configuration
        """
        with open(output_path, 'w', encoding='utf-8') as f:
            if output_path.endswith('.yaml') or output_path.endswith('.yml'):
                yaml.safe_dump(self.config, f, default_flow_style=False)
            elif output_path.endswith('.json'):
                json.dump(self.config, f, indent=4)
            else:
                raise ValueError(f"Unsupported output format: {output_path}")

        logger.info(f"Configuration saved to: {output_path}")

    def errors(self) -> List[str]:
        """List every validation problem of the current configuration."""
        problems = []

        for key in self.REQUIRED_KEYS:
            if self.get(key) is None:
                problems.append(f"Missing required configuration: {key}")

        for key in self.POSITIVE_KEYS:
            value = self.get(key)
            if value is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                problems.append(f"Configuration value {key} must be a positive number, got {value!r}")

        mode = self.get('iteration.equivalence_mode')
        if mode is not None and str(mode).lower() not in EQUIVALENCE_MODES:
            problems.append(f"Invalid equivalence mode {mode!r}. Must be 'strict' or 'modulo_trivial'")

        budget = self.get('iteration.space_budget')
        if budget is not None and (isinstance(budget, bool) or not isinstance(budget, int) or budget < 1):
            problems.append(f"iteration.space_budget must be an integer >= 1, got {budget!r}")

        level = self.get('logging.level')
        if level is not None and str(level).upper() not in LOG_LEVELS:
            problems.append(f"Invalid log level {level!r}. Must be one of {', '.join(LOG_LEVELS)}")

        return problems

    def validate(self) -> bool:
        """Validate the configuration.

        Returns:
            True if configuration is valid, False otherwise
        """
        problems = self.errors()
        for problem in problems:
            logger.error(problem)
        return not problems

    def __repr__(self) -> str:
        """String representation of the configuration."""
        return f"ConfigLoader(config_path={self.config_path})"


# Singleton instance
_config_instance: Optional[ConfigLoader] = None


def get_config(config_path: Optional[str] = None) -> ConfigLoader:
    """Get or create the global configuration instance.

    Args:
        config_path: Path to configuration file

    Returns:
        ConfigLoader instance
    """
    global _config_instance

    if _config_instance is None:
        if config_path is None:
            search_paths = [
                DEFAULT_CONFIG_PATH,
                'configs/config.yml',
                'configs/config.json',
                'config.yaml',
                'config.yml'
            ]
            for path in search_paths:
                if os.path.exists(path):
                    config_path = path
                    break

        _config_instance = ConfigLoader(config_path)

    return _config_instance


def reload_config(config_path: str) -> ConfigLoader:
    """Reload configuration from a new file.

    Args:
        config_path: Path to new configuration file

    Returns:
        Updated ConfigLoader instance
    """
    global _config_instance
    _config_instance = ConfigLoader(config_path)
    return _config_instance
