import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale scenario tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale scenario runs, skipped unless --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def finite_difference_grad(func, theta, h=1e-4):
    """Five-point central differences of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h
        grad[i] = (
            -func(theta + 2 * step) + 8 * func(theta + step) - 8 * func(theta - step) + func(theta - 2 * step)
        ) / (12 * h)
    return grad


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture
def standard_grid():
    return np.arange(50) / 50.0


@pytest.fixture
def fd_grad():
    return finite_difference_grad


@pytest.fixture
def rel_err():
    return relative_error
