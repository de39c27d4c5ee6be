import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def naive_area(x, i, j, theta=0.0):
    """Plain double loop for sum_{i<=k<j} (x_k + theta dx_k - x_i) (x) dx_k."""
    x = np.asarray(x, dtype=float)
    d = x.shape[1]
    out = np.zeros((d, d))
    for k in range(i, j):
        dx = x[k + 1] - x[k]
        left = x[k] + theta * dx - x[i]
        for a in range(d):
            for b in range(d):
                out[a, b] += left[a] * dx[b]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_verdict(number, title, ok, detail):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
