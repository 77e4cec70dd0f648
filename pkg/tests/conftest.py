import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ABC_Z_CROSS = (2.0, 0.6, 0.0)
ABC_Z_CLEAN = (4.0, 0.6, 0.0)
CDV_Z0 = (1.14, 0.0, 0.0, -0.91, 0.0, 0.0)
TWO_PI = 2 * math.pi


def fd_jacobian(f, z, h=1e-5):
    """Central differences of ``f`` at ``z``, one column per coordinate."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(len(z)):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((f(z + e) - f(z - e)) / (2 * h))
    return np.stack(cols, axis=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
