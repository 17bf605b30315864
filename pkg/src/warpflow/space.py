"""Rotationally symmetric spaces with split density.

A space is a warped product ``[0, inf) x_w S^2`` described by the warping
function ``w``; the density splits as ``xi = phi(r) + psi(sigma)`` with a radial
part ``phi`` and an angular part ``psi`` living on the unit sphere.

Everything here is immutable after construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import ConfigurationError, DomainError

__all__ = [
    "WarpedSpace",
    "RadialDensity",
    "AngularDensity",
    "DensitySpec",
    "ConformalType",
    "euclidean",
    "hyperbolic",
    "power",
    "tabulated",
    "no_radial_density",
    "gaussian",
    "log_power",
    "tabulated_radial",
    "zero_psi",
    "constant_psi",
    "z_squared",
    "psi_table",
    "eval_B",
    "sphere_area",
    "weighted_circle_length",
    "find_B_roots",
    "classify_conformal_type",
]


# --------------------------------------------------------------------------
# warping functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WarpedSpace:
    """Warping function of the metric ``dr^2 + w(r)^2 g_{S^2}``.

    Parameters
    ----------
    kind : str
        Preset identifier: ``"euclidean"``, ``"hyperbolic"``, ``"power"`` or
        ``"tabulated"``.
    w, w_prime, log_w : callable
        The warping function, its derivative and ``ln w``.  ``log_w`` is kept
        separately so that ratios ``w(a)/w(b)`` stay finite where ``w``
        overflows (``sinh`` at large radius).
    domain_floor : float
        Radii ``r <= domain_floor`` are rejected.
    tail : str or None
        Declared behaviour at infinity, ``"power"`` or ``"sinh"``.
    tail_power : float or None
        Exponent ``p`` when ``w ~ r**p`` at infinity.
    extends_to_pole : bool
        Whether ``w(0) = 0`` and ``w'(0) = 1`` hold.
    """

    kind: str
    w: Callable
    w_prime: Callable
    log_w: Callable
    domain_floor: float = 0.0
    tail: Optional[str] = None
    tail_power: Optional[float] = None
    extends_to_pole: bool = True
    params: dict = field(default_factory=dict)

    def check_radius(self, r):
        r_min = np.min(r)
        if not r_min > self.domain_floor:
            raise DomainError(
                f"radius {r_min!r} is not above the domain floor {self.domain_floor!r} "
                f"of the {self.kind} space"
            )


def euclidean() -> WarpedSpace:
    """Flat space, ``w(r) = r``."""
    return WarpedSpace(
        kind="euclidean",
        w=lambda r: r,
        w_prime=lambda r: np.ones_like(r) if isinstance(r, np.ndarray) else 1.0,
        log_w=np.log,
        tail="power",
        tail_power=1.0,
    )


def _log_sinh(r):
    r = np.asarray(r, dtype=float)
    return r + np.log(-np.expm1(-2.0 * r)) - math.log(2.0)


def hyperbolic() -> WarpedSpace:
    """Hyperbolic space of curvature -1, ``w(r) = sinh r``."""
    return WarpedSpace(
        kind="hyperbolic",
        w=np.sinh,
        w_prime=np.cosh,
        log_w=_log_sinh,
        tail="sinh",
    )


def _bump(x):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def _bump_prime(x):
    with np.errstate(divide="ignore", over="ignore"):
        safe = np.where(x > 0, x, 1.0)
        return np.where(x > 0, np.exp(-1.0 / safe) / safe**2, 0.0)


def _step(x):
    # C-infinity transition: 0 for x <= 0, 1 for x >= 1
    x = np.asarray(x, dtype=float)
    f, g = _bump(x), _bump(1.0 - x)
    return f / (f + g)


def _step_prime(x):
    x = np.asarray(x, dtype=float)
    f, g = _bump(x), _bump(1.0 - x)
    fp, gp = _bump_prime(x), -_bump_prime(1.0 - x)
    return (fp * g - f * gp) / (f + g) ** 2


def power(p: float, C: float = 1.0) -> WarpedSpace:
    """``w(r) = r**p`` for ``r >= C``, smoothly blended with ``w(r) = r`` on ``[0, C]``.

    The blend ``w = (1 - s) r + s r**p`` uses a C-infinity step ``s(r/C)`` that
    vanishes near 0, so ``w(0) = 0`` and ``w'(0) = 1``.
    """
    if p <= 0 or C <= 0:
        raise ConfigurationError("power space needs p > 0 and C > 0")

    def w(r):
        r = np.asarray(r, dtype=float)
        s = _step(r / C)
        out = (1.0 - s) * r + s * np.power(r, p)
        return float(out) if out.ndim == 0 else out

    def w_prime(r):
        r = np.asarray(r, dtype=float)
        s = _step(r / C)
        ds = _step_prime(r / C) / C
        out = (1.0 - s) + s * p * np.power(r, p - 1.0) + ds * (np.power(r, p) - r)
        return float(out) if out.ndim == 0 else out

    def log_w(r):
        r = np.asarray(r, dtype=float)
        far = p * np.log(np.where(r > 0, r, 1.0))
        with np.errstate(divide="ignore"):
            near = np.log(np.where(r >= C, 1.0, w(np.minimum(r, C))))
        out = np.where(r >= C, far, near)
        return float(out) if out.ndim == 0 else out

    return WarpedSpace(
        kind="power",
        w=w,
        w_prime=w_prime,
        log_w=log_w,
        tail="power",
        tail_power=float(p),
        params={"p": p, "C": C},
    )


def tabulated(r_knots, w_values, tail: Optional[str] = None,
              tail_power: Optional[float] = None) -> WarpedSpace:
    """Warping function from a table, cubic spline with its own derivative.

    Beyond the last knot the declared tail takes over (``w ~ r**p`` or
    ``w ~ sinh r``, matched in value at the last knot); without a tail the
    spline is extrapolated.  The domain floor is the first knot.
    """
    r_knots = np.asarray(r_knots, dtype=float)
    w_values = np.asarray(w_values, dtype=float)
    if r_knots.ndim != 1 or r_knots.size < 4 or np.any(np.diff(r_knots) <= 0):
        raise ConfigurationError("tabulated w needs >= 4 strictly increasing knots")
    if np.any(w_values <= 0):
        raise ConfigurationError("tabulated w must be positive")
    if tail not in (None, "power", "sinh"):
        raise ConfigurationError(f"unknown tail {tail!r}")
    if tail == "power" and tail_power is None:
        raise ConfigurationError("power tail needs tail_power")

    spline = interpolate.CubicSpline(r_knots, w_values, extrapolate=True)
    dspline = spline.derivative()
    r_last, w_last = r_knots[-1], w_values[-1]

    def _tail_log(r):
        if tail == "power":
            return math.log(w_last) + tail_power * np.log(r / r_last)
        return math.log(w_last) + _log_sinh(r) - _log_sinh(r_last)

    def _tail_dlog(r):
        if tail == "power":
            return tail_power / r
        return 1.0 / np.tanh(r)

    def log_w(r):
        r = np.asarray(r, dtype=float)
        if tail is None:
            out = np.log(spline(r))
        else:
            inner = np.log(np.abs(spline(np.minimum(r, r_last))))
            out = np.where(r <= r_last, inner, _tail_log(np.maximum(r, r_last)))
        return float(out) if out.ndim == 0 else out

    def w(r):
        out = np.exp(log_w(r))
        return float(out) if np.ndim(out) == 0 else out

    def w_prime(r):
        r = np.asarray(r, dtype=float)
        if tail is None:
            out = dspline(r)
        else:
            rr = np.maximum(r, r_last)
            out = np.where(r <= r_last, dspline(np.minimum(r, r_last)),
                           _tail_dlog(rr) * np.exp(_tail_log(rr)))
        return float(out) if np.ndim(out) == 0 else out

    return WarpedSpace(
        kind="tabulated",
        w=w,
        w_prime=w_prime,
        log_w=log_w,
        domain_floor=float(r_knots[0]),
        tail=tail,
        tail_power=tail_power,
        extends_to_pole=False,
        params={"knots": int(r_knots.size)},
    )


# --------------------------------------------------------------------------
# densities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialDensity:
    name: str
    phi: Callable
    phi_prime: Callable
    extends_C1_to_zero: bool
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AngularDensity:
    """Density on the unit sphere.

    ``psi`` maps an ``(n, 3)`` array of unit vectors to ``(n,)`` values and
    ``psi_grad`` to the ``(n, 3)`` intrinsic gradient (tangent to the sphere).
    """

    name: str
    psi: Callable
    psi_grad: Callable
    is_zero: bool = False
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DensitySpec:
    """Split density ``xi = phi(r) + psi(point on S^2)``."""

    radial: RadialDensity
    angular: AngularDensity

    @property
    def phi(self):
        return self.radial.phi

    @property
    def phi_prime(self):
        return self.radial.phi_prime

    @property
    def phi_extends_C1_to_zero(self) -> bool:
        return self.radial.extends_C1_to_zero

    @property
    def psi(self):
        return self.angular.psi

    @property
    def psi_grad(self):
        return self.angular.psi_grad


def no_radial_density() -> RadialDensity:
    return RadialDensity("none", lambda r: 0.0 * r, lambda r: 0.0 * r, True)


def log_power(a: float = 0.0, b: float = 0.0, c: float = 0.0) -> RadialDensity:
    """``phi(r) = a ln r + b r^2 / 2 + c / r``."""

    def phi(r):
        return a * np.log(r) + 0.5 * b * r * r + c / r

    def phi_prime(r):
        return a / r + b * r - c / (r * r)

    return RadialDensity(
        "log_power", phi, phi_prime, extends_C1_to_zero=(a == 0 and c == 0),
        params={"a": a, "b": b, "c": c},
    )


def gaussian(mu: float) -> RadialDensity:
    """Gaussian radial density ``phi(r) = -mu^2 r^2 / 2``."""
    if mu <= 0:
        raise ConfigurationError("gaussian density needs mu > 0")
    m2 = mu * mu
    return RadialDensity(
        "gaussian",
        lambda r: -0.5 * m2 * r * r,
        lambda r: -m2 * r,
        True,
        params={"mu": mu},
    )


def tabulated_radial(r_knots, phi_values, extends_C1_to_zero: bool = False) -> RadialDensity:
    spline = interpolate.CubicSpline(np.asarray(r_knots, float), np.asarray(phi_values, float))
    dspline = spline.derivative()
    return RadialDensity(
        "tabulated",
        lambda r: spline(r)[()],
        lambda r: dspline(r)[()],
        extends_C1_to_zero,
        params={"knots": len(r_knots)},
    )


def _tangential(points, grad):
    return grad - np.sum(grad * points, axis=-1, keepdims=True) * points


def zero_psi() -> AngularDensity:
    return AngularDensity(
        "zero",
        lambda p: np.zeros(np.shape(p)[:-1]),
        lambda p: np.zeros(np.shape(p)),
        is_zero=True,
    )


def constant_psi(c: float) -> AngularDensity:
    return AngularDensity(
        "constant",
        lambda p: np.full(np.shape(p)[:-1], float(c)),
        lambda p: np.zeros(np.shape(p)),
        params={"c": c},
    )


def z_squared(a: float = 1.0) -> AngularDensity:
    """``psi(p) = a p_z^2``."""

    def psi(p):
        p = np.asarray(p, dtype=float)
        return a * p[..., 2] ** 2

    def psi_grad(p):
        p = np.asarray(p, dtype=float)
        g = np.zeros_like(p)
        g[..., 2] = 2.0 * a * p[..., 2]
        return _tangential(p, g)

    return AngularDensity("z_squared", psi, psi_grad, params={"a": a})


def psi_table(theta_grid, lon_grid, values) -> AngularDensity:
    """Angular density tabulated on a polar-angle / longitude grid.

    Bilinear interpolation; the intrinsic gradient is assembled from the
    interpolant's partial derivatives as
    ``d psi/d theta e_theta + (1 / sin theta) d psi/d lon e_lon``.
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    lon_grid = np.asarray(lon_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (theta_grid.size, lon_grid.size):
        raise ConfigurationError("psi table shape must be (len(theta), len(lon))")
    if np.any(np.diff(theta_grid) <= 0) or np.any(np.diff(lon_grid) <= 0):
        raise ConfigurationError("psi table grids must be strictly increasing")
    lon0, lon1 = lon_grid[0], lon_grid[-1]

    def _angles(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        theta = np.arccos(np.clip(p[:, 2], -1.0, 1.0))
        lon = np.mod(np.arctan2(p[:, 1], p[:, 0]) - lon0, 2 * np.pi) + lon0
        lon = np.clip(lon, lon0, lon1)
        theta = np.clip(theta, theta_grid[0], theta_grid[-1])
        return p, theta, lon

    def _bilinear(theta, lon):
        # value and both partial derivatives of the bilinear interpolant
        i = np.clip(np.searchsorted(theta_grid, theta, side="right") - 1, 0, theta_grid.size - 2)
        j = np.clip(np.searchsorted(lon_grid, lon, side="right") - 1, 0, lon_grid.size - 2)
        ht = theta_grid[i + 1] - theta_grid[i]
        hl = lon_grid[j + 1] - lon_grid[j]
        u = (theta - theta_grid[i]) / ht
        v = (lon - lon_grid[j]) / hl
        f00, f10 = values[i, j], values[i + 1, j]
        f01, f11 = values[i, j + 1], values[i + 1, j + 1]
        val = (1 - u) * (1 - v) * f00 + u * (1 - v) * f10 + (1 - u) * v * f01 + u * v * f11
        d_theta = ((1 - v) * (f10 - f00) + v * (f11 - f01)) / ht
        d_lon = ((1 - u) * (f01 - f00) + u * (f11 - f10)) / hl
        return val, d_theta, d_lon

    def psi(p):
        shape = np.shape(p)[:-1]
        _, theta, lon = _angles(p)
        return _bilinear(theta, lon)[0].reshape(shape)

    def psi_grad(p):
        shape = np.shape(p)
        pts, theta, lon = _angles(p)
        _, d_theta, d_lon = _bilinear(theta, lon)
        st, ct = np.sin(theta), np.cos(theta)
        sl, cl = np.sin(lon), np.cos(lon)
        e_theta = np.stack([ct * cl, ct * sl, -st], axis=-1)
        e_lon = np.stack([-sl, cl, np.zeros_like(sl)], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lon_term = np.where(st > 1e-12, d_lon / np.where(st > 1e-12, st, 1.0), 0.0)
        g = d_theta[:, None] * e_theta + lon_term[:, None] * e_lon
        return _tangential(pts, g).reshape(shape)

    return AngularDensity("table", psi, psi_grad, params={"shape": values.shape})


# --------------------------------------------------------------------------
# scalar quantities
# --------------------------------------------------------------------------

def eval_B(space: WarpedSpace, density: DensitySpec, r):
    """``B(r) = w'(r)/w(r) + phi'(r)``, the density-weighted curvature of ``S_r``."""
    space.check_radius(r)
    return space.w_prime(r) / space.w(r) + density.phi_prime(r)


def sphere_area(space: WarpedSpace, r):
    space.check_radius(r)
    w = space.w(r)
    return 4.0 * np.pi * w * w


def weighted_circle_length(space: WarpedSpace, density: DensitySpec, r):
    """Weighted length ``2 pi w(r) e^{phi(r)}`` of the circle of radius ``r``
    in the plane ``(R^2, dr^2 + w^2 d theta^2, phi)``."""
    space.check_radius(r)
    return 2.0 * np.pi * np.exp(space.log_w(r) + density.phi(r))


def find_B_roots(space: WarpedSpace, density: DensitySpec, r_lo: float, r_hi: float,
                 tol: float = 1e-12, samples: int = 1024) -> list[float]:
    """Radii in ``[r_lo, r_hi]`` where ``B`` changes sign (B-minimal spheres).

    A uniform scan of ``samples`` points locates sign changes, each bracket
    is refined with Brent's method.  Returned roots satisfy ``|B| <= tol``.
    """
    if not r_lo < r_hi:
        raise ValueError("need r_lo < r_hi")
    space.check_radius(r_lo)
    grid = np.linspace(r_lo, r_hi, samples)
    values = np.asarray(eval_B(space, density, grid), dtype=float)

    def B(r):
        return float(eval_B(space, density, r))

    roots = []
    for i in range(samples - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = values[i], values[i + 1]
        if fa == 0.0:
            if i == 0 or values[i - 1] != 0.0:
                roots.append(float(a))
            continue
        if fa * fb < 0:
            root = optimize.brentq(B, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                   maxiter=200)
            roots.append(float(root))
    if values[-1] == 0.0 and (samples < 2 or values[-2] != 0.0):
        roots.append(float(grid[-1]))
    return [r for r in roots if abs(B(r)) <= tol]


class ConformalType(str, enum.Enum):
    PARABOLIC = "Parabolic"
    HYPERBOLIC = "Hyperbolic"
    INCONCLUSIVE = "Inconclusive"


def _geometric_tail_verdict(windows, n_last: int = 5, factor: float = 0.5):
    """Shared decision rule for dyadic-window tail integrals.

    Returns ``"converges"`` when each of the last ``n_last`` windows shrinks by
    at least ``factor``, ``"diverges"`` when they are non-decreasing, otherwise
    ``None``.
    """
    w = np.asarray(windows, dtype=float)
    if w.size < n_last + 1 or not np.all(np.isfinite(w)):
        return None
    prev, last = w[-n_last - 1:-1], w[-n_last:]
    if np.all(last <= factor * prev * (1.0 + 1e-9)):
        return "converges"
    if np.all(last > 0) and np.all(last >= prev * (1.0 - 1e-9)):
        return "diverges"
    return None


def _log_window_integral(log_integrand, a: float, b: float) -> float:
    # integral over [a, b] of exp(log_integrand(r)) dr, in the variable u = ln r
    def f(u):
        r = math.exp(u)
        return math.exp(float(log_integrand(r)) + u)

    val, _ = integrate.quad(f, math.log(a), math.log(b), epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def classify_conformal_type(space: WarpedSpace, r_start: float,
                            mode: str = "numeric-tail") -> ConformalType:
    """Decide whether ``int^inf dr / Area(S_r)`` diverges (parabolic) or not.

    ``mode="declared-asymptotics"`` trusts the preset's tail; ``"numeric-tail"``
    integrates ``1/Area`` over dyadic windows ``[2^k, 2^(k+1)]`` up to ``2^30``
    and applies the geometric-decay rule of :func:`_geometric_tail_verdict`.
    """
    space.check_radius(r_start)
    if mode == "declared-asymptotics":
        if space.tail == "sinh":
            return ConformalType.HYPERBOLIC
        if space.tail == "power":
            return ConformalType.PARABOLIC if space.tail_power <= 0.5 else ConformalType.HYPERBOLIC
        raise ConfigurationError(
            f"{space.kind} space has no declared tail; use mode='numeric-tail'"
        )
    if mode != "numeric-tail":
        raise ValueError(f"unknown mode {mode!r}")

    k0 = math.floor(math.log2(r_start))
    windows = []
    for k in range(k0, 30):
        a, b = max(2.0 ** k, r_start), 2.0 ** (k + 1)
        if b <= a:
            continue
        windows.append(_log_window_integral(
            lambda r: -2.0 * space.log_w(r) - math.log(4.0 * math.pi), a, b))
    verdict = _geometric_tail_verdict(windows)
    if verdict == "converges":
        return ConformalType.HYPERBOLIC
    if verdict == "diverges":
        return ConformalType.PARABOLIC
    return ConformalType.INCONCLUSIVE
