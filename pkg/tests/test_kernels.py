import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warpflow import _kernels
from warpflow import space as S
from warpflow.sphere_flow import fourier_nodes, make_fourier_curve, make_latitude_circle, flow_step

from conftest import dens


def _arcs_meet_reference(a, b, c, d, samples=400):
    # densely sample both arcs and look for a near-coincidence, then confirm
    # by the sign of the great-circle separation along the first arc
    def arc(p, q):
        t = np.linspace(0, 1, samples)[:, None]
        th = math.acos(np.clip(p @ q, -1, 1))
        return (np.sin((1 - t) * th) * p + np.sin(t * th) * q) / math.sin(th)

    n2 = np.cross(c, d)
    x = arc(a, b)
    side = x @ n2
    idx = np.nonzero(np.sign(side[:-1]) != np.sign(side[1:]))[0]
    for i in idx:
        # crossing point of arc 1 with the great circle of arc 2; on arc 2?
        y = x[i] if abs(side[i]) < abs(side[i + 1]) else x[i + 1]
        ang_cd = math.acos(np.clip(c @ d, -1, 1))
        ang = math.acos(np.clip(c @ y, -1, 1)) + math.acos(np.clip(y @ d, -1, 1))
        if ang <= ang_cd + 1e-6:
            return True
    return False


def _reference_cross(p):
    n = len(p)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _arcs_meet_reference(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]):
                return True
    return False


@pytest.mark.parametrize("a2", [0.0, 0.05, 0.3, 0.8, 2.0])
def test_arcs_cross_matches_reference(a2):
    p = fourier_nodes(math.pi / 3, {2: (a2, 0.0)}, 24)
    assert _kernels.arcs_cross(p) == _reference_cross(p)


def test_arcs_cross_swapped_nodes():
    p = make_latitude_circle(1.0, 24).nodes.copy()
    p[[3, 12]] = p[[12, 3]]
    assert _kernels.arcs_cross(p) and _reference_cross(p)


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(0.3, 1.5), a2=st.floats(-0.05, 0.05), b3=st.floats(-0.03, 0.03),
       rho=st.floats(0.3, 4.0), frac=st.floats(0.1, 1.0))
def test_euler_step_matches_numpy(theta, a2, b3, rho, frac):
    c = make_fourier_curve(theta, {2: (a2, 0.0), 3: (0.0, b3)}, 48, rho)
    p = c.nodes
    for d in (None, dens(angular=S.z_squared(0.7))):
        has = d is not None
        grad = d.psi_grad(p) if has else np.zeros((1, 3))
        out = np.empty_like(p)
        dt, gmin = _kernels.euler_step(p, rho, float(c.orientation), grad, has, 0.25, 1e9, out)
        dt = dt * frac
        _kernels.euler_step(p, rho, float(c.orientation), grad, has, 0.25, dt, out)
        ref = flow_step(c, d, dt).nodes
        assert np.abs(out - ref).max() <= 1e-14


def test_euler_block_matches_single_steps():
    c = make_fourier_curve(1.0, {2: (0.04, 0.0)}, 40, 1.3)
    p, rho = c.nodes.copy(), c.sphere_radius
    L0 = _kernels.gap_sum(p)
    q, steps, used, viol, inc, L, gmin = _kernels.euler_block(p, rho, 1.0, 0.25, 1e9, 17, L0, 1e-10)
    assert steps == 17 and viol == 0 and inc < 0
    grad = np.zeros((1, 3))
    out = np.empty_like(p)
    total = 0.0
    for _ in range(17):
        dt, _ = _kernels.euler_step(p, rho, 1.0, grad, False, 0.25, 1e9, out)
        p, out = out, p
        total += dt
    assert np.array_equal(q, p)
    assert used == pytest.approx(total, rel=1e-14)
    assert L == pytest.approx(_kernels.gap_sum(p), rel=1e-15)


def test_euler_block_stops_at_remaining():
    c = make_latitude_circle(1.0, 32)
    q, steps, used, *_ = _kernels.euler_block(c.nodes, 1.0, 1.0, 0.25, 1e-6, 10 ** 6,
                                               _kernels.gap_sum(c.nodes), 1e-10)
    assert used == 1e-6
    assert steps >= 1
