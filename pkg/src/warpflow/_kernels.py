"""Compiled inner loop of the sphere flow.

Same arithmetic as the numpy path in :mod:`warpflow.sphere_flow`; the tests
check the two against each other.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def gap_sum(p):
    n = p.shape[0]
    total = 0.0
    for i in range(n):
        j = (i + 1) % n
        dx = p[j, 0] - p[i, 0]
        dy = p[j, 1] - p[i, 1]
        dz = p[j, 2] - p[i, 2]
        c = 0.5 * math.sqrt(dx * dx + dy * dy + dz * dz)
        total += 2.0 * math.asin(min(c, 1.0))
    return total


@njit(cache=True)
def euler_step(p, rho, orientation, grad, has_grad, cfl, remaining, out):
    """Explicit Euler step of the psi-curve shortening flow into ``out``.

    Returns ``(dt, min_gap)``; ``dt = min(cfl (min_gap rho)^2, remaining)``.
    """
    n = p.shape[0]
    gaps = np.empty(n)
    gmin = 1e300
    for i in range(n):
        j = (i + 1) % n
        dx = p[j, 0] - p[i, 0]
        dy = p[j, 1] - p[i, 1]
        dz = p[j, 2] - p[i, 2]
        c = 0.5 * math.sqrt(dx * dx + dy * dy + dz * dz)
        g = 2.0 * math.asin(min(c, 1.0))
        gaps[i] = g
        if g < gmin:
            gmin = g
    dt = cfl * (gmin * rho) ** 2
    if remaining < dt:
        dt = remaining
    scale = dt / (rho * rho)
    for i in range(n):
        ip = (i + 1) % n
        im = (i - 1) % n
        hp = gaps[i]
        hm = gaps[im]
        w = 2.0 / (hp + hm)
        d0 = ((p[ip, 0] - p[i, 0]) / hp - (p[i, 0] - p[im, 0]) / hm) * w
        d1 = ((p[ip, 1] - p[i, 1]) / hp - (p[i, 1] - p[im, 1]) / hm) * w
        d2 = ((p[ip, 2] - p[i, 2]) / hp - (p[i, 2] - p[im, 2]) / hm) * w
        dp = d0 * p[i, 0] + d1 * p[i, 1] + d2 * p[i, 2]
        v0 = d0 - dp * p[i, 0]
        v1 = d1 - dp * p[i, 1]
        v2 = d2 - dp * p[i, 2]
        if has_grad:
            t0 = p[ip, 0] - p[im, 0]
            t1 = p[ip, 1] - p[im, 1]
            t2 = p[ip, 2] - p[im, 2]
            tp = t0 * p[i, 0] + t1 * p[i, 1] + t2 * p[i, 2]
            t0 -= tp * p[i, 0]
            t1 -= tp * p[i, 1]
            t2 -= tp * p[i, 2]
            tn = math.sqrt(t0 * t0 + t1 * t1 + t2 * t2)
            t0 /= tn
            t1 /= tn
            t2 /= tn
            n0 = orientation * (p[i, 1] * t2 - p[i, 2] * t1)
            n1 = orientation * (p[i, 2] * t0 - p[i, 0] * t2)
            n2 = orientation * (p[i, 0] * t1 - p[i, 1] * t0)
            gn = grad[i, 0] * n0 + grad[i, 1] * n1 + grad[i, 2] * n2
            v0 -= gn * n0
            v1 -= gn * n1
            v2 -= gn * n2
        x0 = p[i, 0] + scale * v0
        x1 = p[i, 1] + scale * v1
        x2 = p[i, 2] + scale * v2
        r = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
        out[i, 0] = x0 / r
        out[i, 1] = x1 / r
        out[i, 2] = x2 / r
    return dt, gmin


@njit(cache=True)
def euler_block(p, rho, orientation, cfl, remaining, nmax, length0, tol):
    """Up to ``nmax`` steps with psi == 0, stopping once ``remaining`` is used.

    Returns ``(p, steps, elapsed, violations, max_rel_increase, length, min_gap)``;
    a violation is a step that raises the length by more than ``tol * length``.
    """
    a = p.copy()
    b = np.empty_like(p)
    grad = np.zeros((1, 3))
    elapsed = 0.0
    steps = 0
    violations = 0
    max_inc = -1e300
    length = length0
    gmin = 1e300
    while steps < nmax and elapsed < remaining:
        dt, gmin = euler_step(a, rho, orientation, grad, False, cfl, remaining - elapsed, b)
        if gmin < 1e-10:
            break
        steps += 1
        if elapsed + dt >= remaining:
            elapsed = remaining
        else:
            elapsed += dt
        new_length = gap_sum(b)
        inc = (new_length - length) / length
        if inc > tol:
            violations += 1
        if inc > max_inc:
            max_inc = inc
        length = new_length
        a, b = b, a
    return a, steps, elapsed, violations, max_inc, length, gmin


@njit(cache=True)
def _arc_angle(a, n1, x):
    # signed angle of x from a, measured around the pole n1 (unit)
    cx = a[1] * x[2] - a[2] * x[1]
    cy = a[2] * x[0] - a[0] * x[2]
    cz = a[0] * x[1] - a[1] * x[0]
    return math.atan2(cx * n1[0] + cy * n1[1] + cz * n1[2],
                      a[0] * x[0] + a[1] * x[1] + a[2] * x[2])


@njit(cache=True)
def arcs_cross(p):
    """True when two non-adjacent great-circle edges of the closed polygon meet."""
    n = p.shape[0]
    mid = np.empty((n, 3))
    nrm = np.empty((n, 3))
    gmax = 0.0
    for i in range(n):
        j = (i + 1) % n
        m0 = p[i, 0] + p[j, 0]
        m1 = p[i, 1] + p[j, 1]
        m2 = p[i, 2] + p[j, 2]
        r = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
        mid[i, 0] = m0 / r
        mid[i, 1] = m1 / r
        mid[i, 2] = m2 / r
        nrm[i, 0] = p[i, 1] * p[j, 2] - p[i, 2] * p[j, 1]
        nrm[i, 1] = p[i, 2] * p[j, 0] - p[i, 0] * p[j, 2]
        nrm[i, 2] = p[i, 0] * p[j, 1] - p[i, 1] * p[j, 0]
        dx = p[j, 0] - p[i, 0]
        dy = p[j, 1] - p[i, 1]
        dz = p[j, 2] - p[i, 2]
        g = 2.0 * math.asin(min(0.5 * math.sqrt(dx * dx + dy * dy + dz * dz), 1.0))
        if g > gmax:
            gmax = g
    # two edges can only meet if their midpoints are within the sum of half-lengths
    reach = math.cos(min(gmax, math.pi)) - 1e-12
    for i in range(n):
        ib = (i + 1) % n
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if (mid[i, 0] * mid[j, 0] + mid[i, 1] * mid[j, 1] + mid[i, 2] * mid[j, 2]) < reach:
                continue
            jb = (j + 1) % n
            sc = nrm[i, 0] * p[j, 0] + nrm[i, 1] * p[j, 1] + nrm[i, 2] * p[j, 2]
            sd = nrm[i, 0] * p[jb, 0] + nrm[i, 1] * p[jb, 1] + nrm[i, 2] * p[jb, 2]
            if sc * sd > 0:
                continue
            sa = nrm[j, 0] * p[i, 0] + nrm[j, 1] * p[i, 1] + nrm[j, 2] * p[i, 2]
            sb = nrm[j, 0] * p[ib, 0] + nrm[j, 1] * p[ib, 1] + nrm[j, 2] * p[ib, 2]
            if sa * sb > 0:
                continue
            if mid[i, 0] * mid[j, 0] + mid[i, 1] * mid[j, 1] + mid[i, 2] * mid[j, 2] <= 0:
                continue
            if abs(sc) < 1e-15 and abs(sd) < 1e-15:
                # arcs on one great circle: they meet only if the angular intervals overlap
                r = math.sqrt(nrm[i, 0] ** 2 + nrm[i, 1] ** 2 + nrm[i, 2] ** 2)
                pole = nrm[i] / r
                lo = _arc_angle(p[i], pole, p[j])
                hi = _arc_angle(p[i], pole, p[jb])
                if lo > hi:
                    lo, hi = hi, lo
                end = _arc_angle(p[i], pole, p[ib])
                if hi < 0 or lo > end:
                    continue
            return True
    return False
