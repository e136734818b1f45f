import numpy as np
import pytest

from junctionfield.core import JunctionParams
from junctionfield.geometry import hard_wedge_labels, patch_coordinates


def render_junction(R, angles, vertex, levels):
    """Pixel-center rendering of a hard junction; levels per ascending-angle wedge."""
    x, y = patch_coordinates(R)
    lab = hard_wedge_labels(JunctionParams(tuple(angles), tuple(vertex)), x, y)
    return np.asarray(levels, dtype=np.float64)[lab]


def circ_set_distance(a, b):
    """Largest circular difference between two angle sets under their best matching."""
    from itertools import permutations
    a = np.asarray(a)
    best = np.inf
    for p in permutations(range(len(b))):
        d = np.abs((a - np.asarray(b)[list(p)] + np.pi) % (2 * np.pi) - np.pi)
        best = min(best, d.max())
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def report():
    """report(n, ok, detail) records one acceptance line for the summary."""
    def rec(n, ok, detail):
        _ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    return rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
