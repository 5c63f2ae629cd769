import numpy as np
import pytest

from splinetrace import _kernels
from splinetrace.flowdata import FlowFieldSpec, PathlineSet, generate_pathlines

BACKENDS = ["numba", "numpy"] if _kernels.HAS_NUMBA else ["numpy"]

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _kernels.backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@pytest.fixture(scope="session")
def gyre_small():
    """200 double-gyre pathlines over 120 steps; quick but curved."""
    return generate_pathlines(FlowFieldSpec.double_gyre(), 200, 120, substeps=5, seed=3)


@pytest.fixture
def uniform_set():
    rng = np.random.default_rng(7)
    starts = rng.random((30, 3))
    v = np.array([0.3, -0.2, 0.1])
    steps = np.arange(41)
    return PathlineSet(starts[:, None, :] + steps[None, :, None] * v), v


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
