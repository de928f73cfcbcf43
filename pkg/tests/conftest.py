import numpy as np
import pytest

from nbproj.data import make_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=60, p=4, K=3, shift=1.5):
    y = np.concatenate([np.arange(1, K + 1), rng.integers(1, K + 1, size=n - K)])
    X = rng.standard_normal((n, p)) + shift * np.eye(K, p)[y - 1]
    return make_dataset(X, y)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
