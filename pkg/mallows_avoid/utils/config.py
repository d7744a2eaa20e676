"""
Settings utilities for mallows_avoid.

Numeric settings (grid sizes, tolerances, caps) live in a nested JSON document.
User values are deep-merged over the defaults below.
"""

import copy
import json
import os
from typing import Any, Dict, Optional

from loguru import logger

DEFAULT_CONFIG: Dict[str, Any] = {
    "permuton": {
        "grid": 256,
        "tol_mass": 1e-9,
        "simpson_tol": 1e-8,
        "sample_table": 4096,
    },
    "theory": {
        "n_max_exact": 60,
        "quad_tol": 1e-10,
        "max_subdivisions": 2**20,
        "limit_grid": 2**15,
    },
    "sampler": {
        "block_size": 2**20,
    },
    "oracle": {
        "n_max": 8,
        "enumeration_cap": 14,
        "ball_eps": 0.15,
    },
    "output": {
        "float_digits": 17,
    },
}


def default_config() -> Dict[str, Any]:
    """Return a fresh copy of the default settings."""
    return copy.deepcopy(DEFAULT_CONFIG)


def load_config(config_path: Optional[str]) -> Dict[str, Any]:
    """
    Load settings from a JSON file.

    A missing path yields the defaults. The file may be a bare settings
    document or a CLI overlay carrying its settings under a ``settings`` key.

    Args:
        config_path: Path to the settings file, or None

    Returns:
        Settings dictionary merged over the defaults

    Raises:
        ValueError: If the file is not valid JSON or holds invalid values
        OSError: If the file exists but cannot be read
    """
    if not config_path:
        return default_config()

    config_path = os.path.expanduser(config_path)

    if not os.path.exists(config_path):
        logger.warning(f"Settings file not found: {config_path}, using defaults")
        return default_config()

    with open(config_path, "r") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Error parsing settings file {config_path}: {e}") from e

    if not isinstance(raw, dict):
        raise ValueError(f"Settings file {config_path} must hold a JSON object")

    settings = raw.get("settings", raw)
    logger.info(f"Loaded settings from {config_path}")
    return validate_config(settings)


def validate_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate and normalize settings.

    Args:
        config: Settings dictionary (possibly partial)

    Returns:
        Validated settings dictionary

    Raises:
        ValueError: If a known value is out of range
    """
    known = {key: value for key, value in config.items() if key in DEFAULT_CONFIG}
    merged = deep_merge(default_config(), known)

    permuton = merged["permuton"]
    if int(permuton["grid"]) < 2:
        raise ValueError(f"permuton.grid must be at least 2, got {permuton['grid']}")
    for key in ("tol_mass", "simpson_tol"):
        if not float(permuton[key]) > 0.0:
            raise ValueError(f"permuton.{key} must be positive, got {permuton[key]}")

    theory = merged["theory"]
    if not 0 <= int(theory["n_max_exact"]) <= 200:
        raise ValueError(
            f"theory.n_max_exact must be in [0, 200], got {theory['n_max_exact']}"
        )
    if not float(theory["quad_tol"]) > 0.0:
        raise ValueError(f"theory.quad_tol must be positive, got {theory['quad_tol']}")
    for key in ("max_subdivisions", "limit_grid"):
        if int(theory[key]) < 1:
            raise ValueError(f"theory.{key} must be positive, got {theory[key]}")

    if int(merged["sampler"]["block_size"]) < 1:
        raise ValueError("sampler.block_size must be positive")

    oracle = merged["oracle"]
    if not 1 <= int(oracle["enumeration_cap"]) <= 14:
        raise ValueError(
            f"oracle.enumeration_cap must be in [1, 14], got {oracle['enumeration_cap']}"
        )
    if not 1 <= int(oracle["n_max"]) <= int(oracle["enumeration_cap"]):
        raise ValueError(
            f"oracle.n_max must be in [1, enumeration_cap], got {oracle['n_max']}"
        )

    digits = int(merged["output"]["float_digits"])
    if not 1 <= digits <= 17:
        raise ValueError(f"output.float_digits must be in [1, 17], got {digits}")

    return merged


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    Deep merge two dictionaries.

    Args:
        base: Base dictionary
        override: Override dictionary

    Returns:
        Merged dictionary
    """
    result = base.copy()

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value

    return result
