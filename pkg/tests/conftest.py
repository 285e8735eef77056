import numpy as np
import pytest

from frailty_vb.data import Hyperparameters, validate_dataset


@pytest.fixture
def small_dataset():
    """Three clusters, intercept plus one covariate, one censored row per cluster."""
    rows = [
        ("a", 2.0, 1, [1.0, 0.5]),
        ("a", 3.5, 0, [1.0, 1.0]),
        ("b", 1.1, 1, [1.0, 0.2]),
        ("b", 4.0, 1, [1.0, 0.9]),
        ("c", 0.7, 1, [1.0, 0.1]),
        ("c", 2.2, 0, [1.0, 0.4]),
    ]
    return validate_dataset(rows)


@pytest.fixture
def weak2():
    return Hyperparameters.weak(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
