import math

import numpy as np
import pytest

from warpflow import space as S


@pytest.fixture
def flat():
    return S.euclidean()


def dens(radial=None, angular=None):
    return S.DensitySpec(radial or S.no_radial_density(), angular or S.zero_psi())


@pytest.fixture
def gauss1():
    return dens(S.gaussian(1.0))


def rel(a, b):
    return abs(a - b) / abs(b)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def z_rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
