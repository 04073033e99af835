import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def loop_entropy(p):
    import math
    return -sum(v * math.log(v) for v in p if v > 0)


def loop_mi(px, w):
    """Double-sum I = sum_x sum_u p(x) w(u|x) log(w(u|x) / q(u))."""
    import math
    nu = len(w[0])
    q = [sum(px[x] * w[x][u] for x in range(len(px))) for u in range(nu)]
    return sum(px[x] * w[x][u] * math.log(w[x][u] / q[u])
               for x in range(len(px)) for u in range(nu) if px[x] > 0 and w[x][u] > 0)


# one line per acceptance criterion, filled by test_acceptance and printed after the run
ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str):
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
