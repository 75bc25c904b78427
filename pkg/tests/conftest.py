import numpy as np
import pytest

from chernlab.domains import DomainChart
from chernlab.pullback import MapState
from chernlab.targets import make_target


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def disk_map(fn, target_id, N=64, size=0.5, background="flat"):
    dom = DomainChart("Disk", N, size=size, background=background)
    return MapState.from_function(dom, make_target(target_id), fn)


def random_points(rng, n, target_id):
    """Points well inside chart 0 of each target."""
    z = 0.6 * (rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2)))
    if target_id == "Hopf":
        z += np.array([1.2, 0.4 + 0.3j])
    return z


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one pass/fail line for the terminal summary."""
    def add(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
