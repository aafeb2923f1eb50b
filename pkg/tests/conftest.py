"""Shared fixtures: fixture-file access and a few heavily reused pools."""
from __future__ import annotations

import pathlib

import pytest

from apmlab import shocks
from apmlab.config import load_config
from apmlab.valuation import build_pool

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture(scope="session")
def market_fixture_paths() -> list[pathlib.Path]:
    paths = sorted(FIXTURES.glob("market_*.json"))
    assert len(paths) == 10
    return paths


@pytest.fixture(scope="session")
def market_fixture_configs(market_fixture_paths) -> list[dict]:
    return [load_config(p) for p in market_fixture_paths]


@pytest.fixture(scope="session")
def gaussian_pool_small():
    """6 columns, 4000 rows; enough for gradient and density checks."""
    return build_pool(shocks.gaussian(), k=6, n=4000, seed=42)


def load_fixture(name: str) -> dict:
    return load_config(FIXTURES / name)
