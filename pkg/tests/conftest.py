import numpy as np
import pytest
from hypothesis import settings

from krylovlab.linalg import SpdMatrix, random_spd

settings.register_profile("krylovlab", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("krylovlab")


@pytest.fixture
def hand_system():
    """A = diag(1, 3), b = (1, 1): the two-step hand trace."""
    return SpdMatrix.certify(SpdMatrix.from_dense(np.diag([1.0, 3.0]))), np.array([1.0, 1.0])


def random_system(n: int, cond: float, seed: int):
    a = random_spd(n, cond, seed)
    b = np.random.default_rng(seed + 100).standard_normal(n)
    return a, b


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
