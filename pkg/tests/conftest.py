from __future__ import annotations

import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
TEMPLATE_DIR = REPO_ROOT / "templates"

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture(scope="session")
def template_dir() -> Path:
    return TEMPLATE_DIR


@pytest.fixture(scope="session")
def pants_template():
    from patternforge import parse_template

    return parse_template((TEMPLATE_DIR / "pants.json").read_text())


@pytest.fixture(scope="session")
def all_template_paths() -> list[Path]:
    return sorted(TEMPLATE_DIR.glob("*.json"))
