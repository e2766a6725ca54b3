import numpy as np
import pytest

from aroma.linalg import SparseVector


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_sparse(rng, dim, density=0.5):
    x = rng.normal(size=dim) * (rng.random(dim) < density)
    return SparseVector.from_dense(x)


def rand_spd(rng, d, jitter=0.5):
    A = rng.normal(size=(d, d))
    return A @ A.T / d + jitter * np.eye(d)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
