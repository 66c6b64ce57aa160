"""Shared fixtures; puts scripts/ on sys.path the way run.py does."""

import sys
from pathlib import Path

import pytest

SCRIPTS_DIR = Path(__file__).parent.parent / "scripts"
sys.path.insert(0, str(SCRIPTS_DIR))

from config import DATA_DIR, LEXICA_DIR_NAME, SCENARIOS_DIR_NAME  # noqa: E402
from querylex import load_lexica  # noqa: E402
from scenario import load_scenario  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks (still run by default)")


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch):
    monkeypatch.delenv("ORACLESIM_DATA_DIR", raising=False)
    monkeypatch.delenv("ORACLESIM_LOG_LEVEL", raising=False)


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def lexica():
    return load_lexica(DATA_DIR / LEXICA_DIR_NAME)


@pytest.fixture
def bundled_scenario():
    def load(name: str, seed=None):
        return load_scenario(DATA_DIR / SCENARIOS_DIR_NAME / f"{name}.json", seed=seed)
    return load
