import itertools

import numpy as np
import pytest


def brute_force_walk(p):
    """Law of sum of ±1 steps with up-probabilities ``p``, by enumerating 2^n paths."""
    n = len(p)
    out = np.zeros(n + 1)
    for steps in itertools.product((0, 1), repeat=n):
        w = np.prod([pi if s else 1 - pi for pi, s in zip(p, steps)])
        out[sum(steps)] += w
    return out


def brute_force_gibbs(p, bj):
    """Gibbs weights exp(-H) summed by magnetization, and log Z, by enumerating 2^n configurations."""
    n = len(p)
    p = np.asarray(p, dtype=float)
    h = 0.5 * np.log(p / (1 - p))
    weights = np.zeros(n + 1)
    for spins in itertools.product((-1, 1), repeat=n):
        s = np.array(spins)
        m = s.sum()
        weights[(m + n) // 2] += np.exp(bj / (2 * n) * m * m + h @ s)
    return weights / weights.sum(), float(np.log(weights.sum()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
