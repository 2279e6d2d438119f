import numpy as np
import pytest

from pppcausal import ObservedSample

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record one PASS/FAIL line for the acceptance summary."""

    def record(number, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def small_sample():
    rng = np.random.default_rng(123)
    n = 200
    X = rng.normal(size=(n, 2))
    e = 1 / (1 + np.exp(-(0.3 + 0.8 * X[:, 0] - 0.5 * X[:, 1])))
    z = (rng.random(n) < e).astype(int)
    y = 1 + X @ np.array([1.0, -0.5]) + 0.5 * z + rng.normal(size=n)
    return ObservedSample(z=z, y=y, X=X, labels=("a", "b"))
