import sys

import numpy as np
import pytest

from bischro.geometry import GrassmannProjector, SphereS2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sphere():
    return SphereS2()


@pytest.fixture(params=[(2, 1), (3, 1), (4, 2)], ids=lambda nk: f"G{nk[0]}{nk[1]}")
def grassmann(request):
    return GrassmannProjector(*request.param)


@pytest.fixture(params=["sphere", "g31"])
def backend(request):
    return SphereS2() if request.param == "sphere" else GrassmannProjector(3, 1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
