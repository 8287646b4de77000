import numpy as np
import pytest

from romfwh.snapshot import Mesh, SnapshotDataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_dataset(S, dt=1e-3, t0=0.0, layout=("x",)):
    """Dataset on a 1-D strip of cells for raw-matrix experiments."""
    n_cells = S.shape[0] // len(layout)
    mesh = Mesh.structured((n_cells, 1, 1), (1.0, 1.0, 1.0))
    return SnapshotDataset(mesh, t0 + dt * np.arange(S.shape[1]), S, layout)


def oscillator_matrix(f, fs, m, n=16, t0=0.0):
    """Two spatial profiles carrying cos/sin of a single tone: an exact rank-2 linear system."""
    x = np.linspace(0.0, 1.0, n)
    t = t0 + np.arange(m) / fs
    a, b = np.sin(np.pi * x) + 0.3, np.cos(2 * np.pi * x)
    w = 2 * np.pi * f
    return np.outer(a, np.cos(w * t)) + np.outer(b, np.sin(w * t)), t, (a, b)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Register the pass/fail line of one acceptance criterion and echo it."""
    line = "criterion %2d: %s  %s" % (number, "PASS" if ok else "FAIL", detail)
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
