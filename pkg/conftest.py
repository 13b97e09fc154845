"""
Shared pytest fixtures.

Tests live next to the modules they cover (src/<package>/test_*.py) and run
from the repository root: pytest src

Tests marked slow train full models on the desk ablation grid and only run
with --run-slow.
"""

import numpy as np
import pytest

from src.geometry.frames import BevGridSpec


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run tests marked slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains on the desk ablation grid (needs --run-slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="slow, use --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_spec():
    """8 x 8 grid, 1 m cells, 8 channels."""
    return BevGridSpec(x_range=(-4.0, 4.0), y_range=(-4.0, 4.0), resolution=1.0, channels=8)
