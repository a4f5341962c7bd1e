import json
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).parent

# Repo root on the path so `src.*` imports resolve
sys.path.insert(0, str(ROOT))


@pytest.fixture
def baseline_file(tmp_path):
    """A writable copy of the pinned baselines"""
    source = ROOT / "config" / "baselines.json"
    target = tmp_path / "baselines.json"
    target.write_text(source.read_text(encoding="utf-8"), encoding="utf-8")
    return target


@pytest.fixture(scope="session")
def required_keys():
    """Top-level required keys of a docs/schemas/<name>.schema.json file"""

    def load(name: str):
        with open(ROOT / "docs" / "schemas" / f"{name}.schema.json", "r", encoding="utf-8") as f:
            return set(json.load(f)["required"])

    return load
