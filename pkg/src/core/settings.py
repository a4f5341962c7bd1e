"""
PrimExp - Settings
Loads config/settings.json over the built-in defaults. Command-line flags
override what this returns; there are no environment overrides.
"""

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

logger = logging.getLogger(__name__)

# repo root, two levels above src/core
PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_SETTINGS_PATH = PROJECT_ROOT / "config" / "settings.json"
DEFAULT_BASELINE_PATH = PROJECT_ROOT / "config" / "baselines.json"


def _load_default_config() -> Dict[str, Any]:
    return {
        "application": "PrimExp",
        "scan": {
            "segment_length": 2 ** 20,
            "checkpoint_every": 16,
            "workers": 1,
        },
        "tolerance": 1e-9,
        "verify": {
            "grid_base": 10 ** 4,
            "max_x_cap": 10 ** 10,
            "identity_limit": 10 ** 6,
            "acceptance_x": 10 ** 7,
            "baseline_path": str(DEFAULT_BASELINE_PATH),
            "sample_size": 10 ** 5,
        },
        "seed": 0,
        "logging": {
            "level": "INFO",
            "file": "output/logs/primexp.log",
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        },
    }


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_settings(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Defaults deep-merged with the JSON file at path (config/settings.json
    when omitted). A missing file is not an error; a malformed one is.
    """
    settings = _load_default_config()
    path = Path(path) if path is not None else DEFAULT_SETTINGS_PATH
    if not path.exists():
        logger.debug(f"No settings file at {path}, using defaults")
        return settings
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ValueError(f"Settings file {path} must hold a JSON object")
    return _deep_merge(settings, data)


def resolve_project_path(path: Union[str, Path]) -> Path:
    """Relative paths from settings are taken from the repo root, not the working directory"""
    path = Path(path)
    return path if path.is_absolute() else PROJECT_ROOT / path
