import numpy as np
import pytest

from gsczsl.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def brute_affinity(points, beta, k):
    """Triple-loop reference for the self-tuning affinity (all-pairs rule)."""
    n = len(points)
    dist = [[sum((points[i][a] - points[j][a]) ** 2 for a in range(len(points[i]))) ** 0.5
             for j in range(n)] for i in range(n)]
    h = []
    for i in range(n):
        others = sorted(dist[i][j] for j in range(n) if j != i)
        h.append(others[k - 1])
    A = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            A[i, j] = np.exp(-beta * dist[i][j] ** 2 / (h[i] * h[j]))
    return A


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
