"""Shared fixtures: small partitions and quadrature rules."""

import json
import os

import pytest

from core.funcspace import GAUSS_ORDER, QuadratureRule
from core.partition import build_dyadic

CONSTANTS_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "core", "constants.json")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale acceptance experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small():
    """Dyadic partition of [-1, 2], k=2, L=4."""
    return build_dyadic((-1.0, 2.0), 4, 2)


@pytest.fixture
def fine():
    """Dyadic partition of [-1, 2], k=2, L=8."""
    return build_dyadic((-1.0, 2.0), 8, 2)


@pytest.fixture
def fine_rule(fine):
    return QuadratureRule.from_partition(fine, GAUSS_ORDER)


@pytest.fixture(scope="session")
def constants():
    with open(CONSTANTS_FILE, "r", encoding="utf-8") as f:
        return json.load(f)
