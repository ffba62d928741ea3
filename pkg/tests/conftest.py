import numpy as np
import pytest

from fedoselm.elm import Activation, Chunk, Topology, init_model


def naive_matmul(a, b):
    """Triple-loop product, kept deliberately independent of numpy's @."""
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i][k] * b[k][j]
            out[i][j] = acc
    return np.array(out)


def random_spd(rng, n, shift=1.0):
    a = rng.standard_normal((n, n))
    return a.T @ a + shift * np.eye(n)


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.fixture
def rng():
    return np.random.default_rng(20211015)


@pytest.fixture
def small_topology():
    return Topology(8, 4, 8, Activation.IDENTITY, init_seed=7)


def regression_data(rng, rows, n=8, m=8):
    return Chunk(rng.standard_normal((rows, n)), rng.standard_normal((rows, m)))


# Acceptance verdicts, filled by tests/test_acceptance.py and printed once at
# the end of the run so they show up without ``-s``.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
