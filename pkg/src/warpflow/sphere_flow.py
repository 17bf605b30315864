"""Curve shortening flow with density on a fixed round sphere.

Curves are closed polygons of unit vectors; the sphere's physical radius
``rho`` enters only through rescaling (lengths * rho, curvatures / rho,
areas * rho^2).  The distinguished region Omega is the side of the curve with
area fraction <= 1/2; ``orientation = +1`` means Omega lies to the left of
the traversal direction (viewed from outside the sphere).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels
from .errors import ConstructionError, DiscretizationError, GeometryError, StepError
from .space import DensitySpec

__all__ = [
    "SphericalCurve",
    "CurveDiagnostics",
    "SingularityOptions",
    "FlowOptions",
    "RoundPointCollapse",
    "PsiMinimalConvergence",
    "CurvatureBlowup",
    "SphereFlow",
    "make_latitude_circle",
    "fourier_nodes",
    "make_fourier_curve",
    "curvature_density_vector",
    "flow_step",
    "reparametrize_arclength",
    "enclosed_area",
    "weighted_length",
    "curve_diagnostics",
    "detect_singularity",
    "check_embedded",
    "theta_for_fraction",
]

TWO_PI = 2.0 * math.pi
MIN_GAP = 1e-10


# --------------------------------------------------------------------------
# array kernels
# --------------------------------------------------------------------------

def _gaps(p):
    """Geodesic angle between consecutive nodes (closed polygon)."""
    chord = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    return 2.0 * np.arcsin(np.minimum(0.5 * chord, 1.0))


def _left_area(p):
    """Area of the region to the left of the polygon on the unit sphere,
    from Gauss-Bonnet: ``2 pi - sum of turning angles``."""
    nxt = np.roll(p, -1, axis=0)
    prv = np.roll(p, 1, axis=0)
    dot_n = np.sum(p * nxt, axis=1, keepdims=True)
    dot_p = np.sum(p * prv, axis=1, keepdims=True)
    u_out = nxt - dot_n * p
    u_in = dot_p * p - prv
    cross = np.cross(u_in, u_out)
    sin_t = np.sum(cross * p, axis=1)
    cos_t = np.sum(u_in * u_out, axis=1)
    return TWO_PI - float(np.sum(np.arctan2(sin_t, cos_t)))


def _omega_area(p, orientation):
    left = _left_area(p)
    return left if orientation > 0 else 4.0 * math.pi - left


def _frame(p, orientation):
    # unit tangent by central chord and the normal nu pointing into Omega
    t = np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
    t -= np.sum(t * p, axis=1, keepdims=True) * p
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    nu = orientation * np.cross(p, t)
    return t, nu


def _curvature_unit(p, gaps=None):
    """Geodesic curvature vector on the unit sphere: the tangential part of
    the second difference of position with respect to arclength."""
    if gaps is None:
        gaps = _gaps(p)
    if gaps.min() < MIN_GAP:
        raise DiscretizationError(f"node gap {gaps.min():.3e} below {MIN_GAP:g}")
    h_plus = gaps
    h_minus = np.roll(gaps, 1)
    nxt = np.roll(p, -1, axis=0)
    prv = np.roll(p, 1, axis=0)
    D = ((nxt - p) / h_plus[:, None] - (p - prv) / h_minus[:, None]) * (
        2.0 / (h_plus + h_minus))[:, None]
    return D - np.sum(D * p, axis=1, keepdims=True) * p


def _velocity_phys(p, rho, orientation, density, gaps=None):
    """Physical curvature-with-density vector ``(k - <grad psi, nu> nu) / rho``
    together with its curvature part and the normal field."""
    k = _curvature_unit(p, gaps)
    _, nu = _frame(p, orientation)
    if density is None or density.angular.is_zero:
        v = k
    else:
        g = density.psi_grad(p)
        v = k - np.sum(g * nu, axis=1, keepdims=True) * nu
    return v / rho, k / rho, nu


def _normalize(p):
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _weighted_length_unit(p, density, gaps=None):
    if gaps is None:
        gaps = _gaps(p)
    if density is None or density.angular.is_zero:
        return float(np.sum(gaps))
    mid = _normalize(p + np.roll(p, -1, axis=0))
    return float(np.sum(np.exp(density.psi(mid)) * gaps))


def _region_centroid(p, orientation):
    # int_Omega x dA = 1/2 oint x cross dx; exact for great-circle edges
    nxt = np.roll(p, -1, axis=0)
    c = np.cross(p, nxt)
    norms = np.linalg.norm(c, axis=1)
    ang = np.arctan2(norms, np.sum(p * nxt, axis=1))
    ok = norms > 0
    vec = orientation * 0.5 * np.sum((ang[ok] / norms[ok])[:, None] * c[ok], axis=0)
    n = np.linalg.norm(vec)
    return vec / n if n > 0 else vec


def _embedded(p) -> bool:
    return not _kernels.arcs_cross(np.ascontiguousarray(p, dtype=float))


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphericalCurve:
    """Closed polygon of unit vectors on a sphere of radius ``sphere_radius``.

    ``orientation`` is +1 when the distinguished region lies left of the
    traversal, -1 when it lies right; 0 (the default) picks the side with
    area fraction <= 1/2.
    """

    nodes: np.ndarray
    sphere_radius: float = 1.0
    orientation: int = 0

    def __post_init__(self):
        p = np.array(self.nodes, dtype=float, copy=True)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ConstructionError("nodes must be an (N, 3) array")
        if p.shape[0] < 16:
            raise ConstructionError(f"need N >= 16 nodes, got {p.shape[0]}")
        norms = np.linalg.norm(p, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ConstructionError("nodes must be unit vectors (tolerance 1e-12)")
        gaps = _gaps(p)
        if gaps.min() < MIN_GAP:
            raise ConstructionError(f"consecutive nodes closer than {MIN_GAP:g}")
        if not self.sphere_radius > 0:
            raise ConstructionError("sphere_radius must be positive")
        p.setflags(write=False)
        object.__setattr__(self, "nodes", p)
        if self.orientation == 0:
            left = _left_area(p)
            object.__setattr__(self, "orientation", 1 if left <= TWO_PI * (1 + 1e-12) else -1)
        elif self.orientation not in (1, -1):
            raise ConstructionError("orientation must be +1, -1 or 0")

    @property
    def N(self) -> int:
        return self.nodes.shape[0]

    def with_radius(self, rho: float) -> "SphericalCurve":
        return SphericalCurve(self.nodes, rho, self.orientation)

    def rotated(self, matrix) -> "SphericalCurve":
        q = _normalize(self.nodes @ np.asarray(matrix, dtype=float).T)
        return SphericalCurve(q, self.sphere_radius, self.orientation)

    def save(self, path) -> None:
        """Write the snapshot format: ``N rho`` then one ``x y z`` line per node."""
        with open(path, "w") as fh:
            fh.write(f"{self.N} {self.sphere_radius:.17g}\n")
            for x, y, z in self.nodes:
                fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")

    @classmethod
    def load(cls, path, orientation: int = 0) -> "SphericalCurve":
        with open(path) as fh:
            header = fh.readline().split()
            n, rho = int(header[0]), float(header[1])
            nodes = np.loadtxt(fh, ndmin=2)
        if nodes.shape != (n, 3):
            raise ConstructionError(f"snapshot declares {n} nodes, found {nodes.shape[0]}")
        return cls(nodes, rho, orientation)


def theta_for_fraction(fraction: float) -> float:
    """Polar angle of the latitude circle whose polar cap has the given area fraction."""
    if not 0 < fraction <= 0.5:
        raise ValueError("area fraction must lie in (0, 1/2]")
    return math.acos(1.0 - 2.0 * fraction)


def make_latitude_circle(theta0: float, N: int = 128, rho: float = 1.0) -> SphericalCurve:
    """Latitude circle at polar angle ``theta0``; Omega is the polar cap."""
    if not 0 < theta0 <= math.pi / 2:
        raise ConstructionError("theta0 must lie in (0, pi/2]")
    if N < 16:
        raise ConstructionError("N >= 16 required")
    alpha = TWO_PI * np.arange(N) / N
    st = math.sin(theta0)
    ct = 0.0 if theta0 == math.pi / 2 else math.cos(theta0)
    nodes = np.column_stack([st * np.cos(alpha), st * np.sin(alpha), np.full(N, ct)])
    return SphericalCurve(_normalize(nodes), rho, orientation=1)


def fourier_nodes(theta0: float, coeffs, N: int = 128) -> np.ndarray:
    """Nodes of ``theta(alpha) = theta0 + sum a_k cos k alpha + b_k sin k alpha``.

    ``coeffs`` maps ``k`` to ``(a_k, b_k)``.
    """
    alpha = TWO_PI * np.arange(N) / N
    theta = np.full(N, float(theta0))
    for k, (a, b) in dict(coeffs).items():
        theta += a * np.cos(int(k) * alpha) + b * np.sin(int(k) * alpha)
    st = np.sin(theta)
    nodes = np.column_stack([st * np.cos(alpha), st * np.sin(alpha), np.cos(theta)])
    return _normalize(nodes)


def make_fourier_curve(theta0: float, coeffs, N: int = 128, rho: float = 1.0) -> SphericalCurve:
    """Trigonometric perturbation of a latitude circle; raises if not embedded."""
    if not coeffs or all(a == 0 and b == 0 for a, b in dict(coeffs).values()):
        return make_latitude_circle(theta0, N, rho)
    nodes = fourier_nodes(theta0, coeffs, N)
    if not _embedded(nodes):
        raise ConstructionError("Fourier curve is not embedded")
    return SphericalCurve(nodes, rho)


# --------------------------------------------------------------------------
# geometric operations
# --------------------------------------------------------------------------

def curvature_density_vector(curve: SphericalCurve, density: Optional[DensitySpec] = None):
    """Per-node geodesic curvature vector with density, in physical units.

    Returns an ``(N, 3)`` array tangent to the sphere at each node:
    ``(k_unit - <grad psi, nu> nu) / rho`` where ``k_unit`` is the curvature
    vector of the curve on the unit sphere and ``nu`` the normal into Omega.
    """
    v, _, _ = _velocity_phys(curve.nodes, curve.sphere_radius, curve.orientation, density)
    return v


def _step_bound(p, rho, cfl, gaps=None):
    if gaps is None:
        gaps = _gaps(p)
    return cfl * (float(gaps.min()) * rho) ** 2


def flow_step(curve: SphericalCurve, density: Optional[DensitySpec], dt_tilde: float,
              cfl: float = 0.25) -> SphericalCurve:
    """One explicit Euler step ``p <- normalize(p + dt v / rho)``.

    Raises
    ------
    StepError
        ``dt_tilde`` exceeds ``cfl * (min gap * rho)^2``.
    """
    p, rho = curve.nodes, curve.sphere_radius
    gaps = _gaps(p)
    bound = _step_bound(p, rho, cfl, gaps)
    if dt_tilde > bound * (1.0 + 1e-12):
        raise StepError(f"dt_tilde={dt_tilde:.3e} exceeds the admissible bound {bound:.3e}",
                        bound=bound)
    v, _, _ = _velocity_phys(p, rho, curve.orientation, density, gaps)
    return SphericalCurve(_normalize(p + (dt_tilde / rho) * v), rho, curve.orientation)


def _reparametrize(p, passes=3):
    # periodic cubic spline through the nodes in cumulative arclength, sampled at
    # equal steps and projected back; a few passes equalize the projected gaps
    n = p.shape[0]
    first = p[0].copy()
    for _ in range(passes):
        cum = np.concatenate([[0.0], np.cumsum(_gaps(p))])
        spline = CubicSpline(cum, np.vstack([p, p[:1]]), bc_type="periodic")
        p = _normalize(spline(cum[-1] * np.arange(n) / n))
        p[0] = first
    return p


def reparametrize_arclength(curve: SphericalCurve) -> SphericalCurve:
    """Resample at N equal arclength steps along a periodic spline through the
    nodes; node 0 stays."""
    return SphericalCurve(_reparametrize(curve.nodes), curve.sphere_radius, curve.orientation)


def check_embedded(curve: Union[SphericalCurve, np.ndarray]) -> bool:
    """True iff no two non-adjacent great-circle edges intersect."""
    p = curve.nodes if isinstance(curve, SphericalCurve) else np.asarray(curve, dtype=float)
    return _embedded(p)


def enclosed_area(curve: SphericalCurve) -> float:
    """Area of the distinguished region (the side with fraction <= 1/2), times rho^2."""
    if not _embedded(curve.nodes):
        raise GeometryError("enclosed area of a non-embedded curve")
    left = _left_area(curve.nodes)
    a = min(left, 4.0 * math.pi - left)
    return a * curve.sphere_radius ** 2


def weighted_length(curve: SphericalCurve, density: Optional[DensitySpec] = None) -> float:
    """``sum exp(psi(midpoint)) * gap * rho``."""
    return _weighted_length_unit(curve.nodes, density) * curve.sphere_radius


# --------------------------------------------------------------------------
# diagnostics and singularity detection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveDiagnostics:
    length: float
    weighted_length: float
    max_abs_k: float
    max_abs_k_psi: float
    enclosed_area: float
    area_fraction: float
    isoperimetric_ratio: float
    sphere_radius: float = 1.0
    ttilde: float = 0.0
    centroid: tuple = (0.0, 0.0, 1.0)


def _diagnostics(p, rho, orientation, density, ttilde=0.0) -> CurveDiagnostics:
    gaps = _gaps(p)
    v, k, nu = _velocity_phys(p, rho, orientation, density, gaps)
    length = float(np.sum(gaps)) * rho
    area_unit = _omega_area(p, orientation)
    area = area_unit * rho * rho
    denom = area_unit * (4.0 * math.pi - area_unit) * rho * rho
    return CurveDiagnostics(
        length=length,
        weighted_length=_weighted_length_unit(p, density, gaps) * rho,
        max_abs_k=float(np.max(np.abs(np.sum(k * nu, axis=1)))),
        max_abs_k_psi=float(np.max(np.abs(np.sum(v * nu, axis=1)))),
        enclosed_area=area,
        area_fraction=area_unit / (4.0 * math.pi),
        isoperimetric_ratio=length * length / denom if denom > 0 else math.inf,
        sphere_radius=rho,
        ttilde=ttilde,
        centroid=tuple(_region_centroid(p, orientation).tolist()),
    )


def curve_diagnostics(curve: SphericalCurve, density: Optional[DensitySpec] = None,
                      ttilde: float = 0.0) -> CurveDiagnostics:
    return _diagnostics(curve.nodes, curve.sphere_radius, curve.orientation, density, ttilde)


@dataclass(frozen=True)
class SingularityOptions:
    """Thresholds for :func:`detect_singularity`; lengths relative to rho."""

    window: int = 50
    len_eps: float = 1e-3
    kpsi_eps: float = 1e-5
    blowup_ratio: float = 1e3
    round_tol: float = 0.05


@dataclass(frozen=True)
class RoundPointCollapse:
    location: tuple
    name = "RoundPointCollapse"


@dataclass(frozen=True)
class PsiMinimalConvergence:
    name = "PsiMinimalConvergence"


@dataclass(frozen=True)
class CurvatureBlowup:
    name = "CurvatureBlowup"


def detect_singularity(history: Sequence[CurveDiagnostics],
                       opts: Optional[SingularityOptions] = None):
    """Classify the recent diagnostics of a sphere flow.

    The collapse and blow-up tests look at the newest entry only; the
    psi-minimal test needs a full window of ``opts.window`` entries.
    """
    o = opts or SingularityOptions()
    if not history:
        return None
    last = history[-1]
    rho = last.sphere_radius
    if (last.length < o.len_eps * rho
            and abs(last.isoperimetric_ratio - 1.0) <= o.round_tol):
        return RoundPointCollapse(location=tuple(last.centroid))
    if last.max_abs_k * last.length > o.blowup_ratio:
        return CurvatureBlowup()
    if len(history) >= o.window:
        recent = list(history)[-o.window:]
        if all(d.max_abs_k_psi < o.kpsi_eps / d.sphere_radius for d in recent) and all(
                d.length > 10 * o.len_eps * d.sphere_radius for d in recent):
            return PsiMinimalConvergence()
    return None


# --------------------------------------------------------------------------
# flow driver
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowOptions:
    cfl: float = 0.25
    reparam_every: int = 25
    diag_every: int = 10
    embed_check_every: int = 100
    check_monotone: bool = True
    max_steps: int = 5_000_000
    singularity: SingularityOptions = field(default_factory=SingularityOptions)


class SphereFlow:
    """Stateful explicit integration of the psi-curve shortening flow.

    The flow is advanced on demand with :meth:`advance_to`; it stops at the
    first detected singularity.  Once psi-minimal convergence is detected
    the curve is held fixed.
    """

    def __init__(self, curve: SphericalCurve, density: Optional[DensitySpec] = None,
                 opts: Optional[FlowOptions] = None):
        self.opts = opts or FlowOptions()
        self.density = density
        self.rho = curve.sphere_radius
        self.orientation = curve.orientation
        self._p = np.array(curve.nodes)
        self._has_grad = density is not None and not density.angular.is_zero
        self._no_grad = np.zeros((1, 3))
        self.ttilde = 0.0
        self.steps = 0
        self.status = "running"
        self.singular_at: Optional[float] = None
        self.singularity = None
        self.history: deque = deque(maxlen=max(self.opts.singularity.window, 1))
        self.series: list[CurveDiagnostics] = []
        self.events: list[tuple] = []
        self.monotone_violations = 0
        self.max_length_increase = 0.0
        self.embedding_checks = 0
        self.embedding_failures: list[int] = []
        self._lw = self._length_now(self._p)
        self._record()

    @property
    def curve(self) -> SphericalCurve:
        return SphericalCurve(self._p, self.rho, self.orientation)

    @property
    def diagnostics(self) -> CurveDiagnostics:
        return self.series[-1]

    def _record(self):
        d = _diagnostics(self._p, self.rho, self.orientation, self.density, self.ttilde)
        if d.area_fraction > 0.5 + 1e-9:
            # Omega now larger than half the sphere: switch to the other side
            self.orientation = -self.orientation
            self.events.append(("region_side_flip", self.ttilde, d.area_fraction))
            d = _diagnostics(self._p, self.rho, self.orientation, self.density, self.ttilde)
        self.series.append(d)
        self.history.append(d)
        return d

    def _length_now(self, p):
        return _weighted_length_unit(p, self.density) if self._has_grad else _kernels.gap_sum(p)

    def _check_length(self, p):
        lw = self._length_now(p)
        inc = lw - self._lw
        if inc > 1e-10 * self._lw:
            self.monotone_violations += 1
        self.max_length_increase = max(self.max_length_increase, inc / self._lw)
        self._lw = lw

    def _steps_to_boundary(self):
        o = self.opts
        n = o.max_steps - self.steps
        for every in (o.reparam_every, o.diag_every, o.embed_check_every):
            if every:
                n = min(n, every - self.steps % every)
        return n

    def _run_block(self, nmax, remaining):
        """Advance up to ``nmax`` steps without bookkeeping; returns the t~ used."""
        o = self.opts
        if not self._has_grad:
            length0 = _kernels.gap_sum(self._p)
            p, steps, used, viol, inc, length, gmin = _kernels.euler_block(
                self._p, self.rho, float(self.orientation), o.cfl, remaining, nmax,
                length0, 1e-10 if o.check_monotone else np.inf)
            if steps < nmax and used < remaining:
                raise DiscretizationError(f"node gap {gmin:.3e} below {MIN_GAP:g}")
            self._p = p
            self.steps += steps
            if o.check_monotone and steps:
                self.monotone_violations += viol
                self.max_length_increase = max(self.max_length_increase, inc)
                self._lw = length
            return used
        used = 0.0
        new = np.empty_like(self._p)
        for _ in range(nmax):
            if used >= remaining:
                break
            grad = np.ascontiguousarray(self.density.psi_grad(self._p), dtype=float)
            dt, gmin = _kernels.euler_step(self._p, self.rho, float(self.orientation), grad,
                                           True, o.cfl, remaining - used, new)
            if gmin < MIN_GAP:
                raise DiscretizationError(f"node gap {gmin:.3e} below {MIN_GAP:g}")
            self._p, new = new, self._p
            self.steps += 1
            used = remaining if used + dt >= remaining else used + dt
            if o.check_monotone:
                self._check_length(self._p)
        return used

    def advance_to(self, target: float) -> str:
        """Advance to ``ttilde = target`` or until the flow stops; returns the status."""
        o = self.opts
        if self.status == "psi_minimal":
            self.ttilde = max(self.ttilde, target)
            return self.status
        while self.status == "running" and self.ttilde < target:
            if self.steps >= o.max_steps:
                self.status = "budget"
                break
            used = self._run_block(self._steps_to_boundary(), target - self.ttilde)
            self.ttilde = target if self.ttilde + used >= target else self.ttilde + used
            if o.reparam_every and self.steps % o.reparam_every == 0:
                self._p = _reparametrize(self._p, passes=1)
                if o.check_monotone:
                    # resampling is not a flow step; restart the baseline
                    self._lw = self._length_now(self._p)
            if o.embed_check_every and self.steps % o.embed_check_every == 0:
                self.embedding_checks += 1
                if not _embedded(self._p):
                    self.embedding_failures.append(self.steps)
            if (o.diag_every and self.steps % o.diag_every == 0) or self.ttilde >= target:
                self._record()
                self._classify()
        if self.status == "psi_minimal":
            # the limit curve is held fixed from here on
            self.ttilde = max(self.ttilde, target)
        return self.status

    def _classify(self):
        found = detect_singularity(self.history, self.opts.singularity)
        if found is None:
            return
        self.singularity = found
        self.singular_at = self.ttilde
        self.status = {
            "RoundPointCollapse": "round_point",
            "PsiMinimalConvergence": "psi_minimal",
            "CurvatureBlowup": "blowup",
        }[found.name]
        self.events.append((found.name, self.ttilde))
