from __future__ import annotations

import numpy as np
import pytest

from expscreen.linalg import DesignProblem


def random_problem(n, M, seed=0, sigma2=1.0, s=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, M))
    theta = np.zeros(M)
    k = min(M, 3) if s is None else s
    theta[:k] = rng.uniform(0.5, 2.0, size=k) * rng.choice([-1, 1], size=k)
    Y = X @ theta + np.sqrt(sigma2) * rng.standard_normal(n)
    return DesignProblem(X, Y, sigma2, theta)


@pytest.fixture
def make_problem():
    return random_problem


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
