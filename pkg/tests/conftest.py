import math
import sys
from pathlib import Path

import numpy as np
import pytest

from affinesmile.models import CIR2DParams, CIRParams, FongVasicekParams, VasicekParams

sys.path.insert(0, str(Path(__file__).parent))

KAPPA = 0.9
THETA = 0.08 / 0.9
DELTA = math.sqrt(0.033)
TBAR = 2.0


@pytest.fixture(scope="session")
def vasicek():
    return VasicekParams(KAPPA, THETA, DELTA)


@pytest.fixture(scope="session")
def cir():
    return CIRParams(KAPPA, THETA, DELTA)


@pytest.fixture(scope="session")
def cir2d():
    return CIR2DParams(KAPPA, THETA, DELTA, KAPPA, THETA, DELTA)


def fong_vasicek(rho):
    return FongVasicekParams(0.9, 0.08, 0.9, 0.08, math.sqrt(0.08), rho)


@pytest.fixture(scope="session")
def fv():
    return fong_vasicek(0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
