import itertools

import numpy as np
import pytest

from bqamd.constellation import Modulation, points
from bqamd.objective import BlockProblem


def crandn(rng, *shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


def random_block_problem(rng, n_symbols=2, mod=Modulation.QAM16, lam=0.0, ell=0):
    R = np.triu(crandn(rng, n_symbols, n_symbols))
    R[np.diag_indices(n_symbols)] = np.abs(R.diagonal()) + 0.5
    y_bar = crandn(rng, n_symbols) * 2
    z_ref = points(mod)[rng.integers(mod.order, size=n_symbols)] if lam > 0 else None
    return BlockProblem(ell, y_bar, R, mod, z_ref, lam)


def brute_force_ml(H, y, mod):
    pts = points(mod)
    best, best_d = None, np.inf
    for cand in itertools.product(pts, repeat=H.shape[1]):
        x = np.array(cand)
        d = np.sum(np.abs(y - H @ x) ** 2)
        if d < best_d:
            best, best_d = x, d
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def report(criterion, ok, detail):
    """Record one acceptance line and fail the calling test when ``ok`` is false."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
