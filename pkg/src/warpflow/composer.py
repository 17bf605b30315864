"""The ambient flow assembled from the radial motion and the sphere flow.

A spherical curve ``gamma_0`` on ``S_{r0}`` evolves by keeping its angular
shape on the flow of the fixed sphere and moving radially:

    gamma(., t) = (R(t), gamma~(., ttilde(t)))

in product coordinates ``[0, inf) x S^2``.  The radial ODE does not see the
curve, so it is integrated first; the sphere flow is then driven in
``ttilde`` exactly as far as the radial trajectory (or its analytic tail)
requires.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, RangeError, UsageError
from .radial import (
    Budget,
    Escape,
    PoleHit,
    RadialOptions,
    RadialTrajectory,
    RootConvergence,
    integrate_radial,
    invert_time_change,
)
from .space import (
    ConformalType,
    DensitySpec,
    WarpedSpace,
    classify_conformal_type,
    eval_B,
)
from .sphere_flow import FlowOptions, SphereFlow, SphericalCurve, check_embedded

__all__ = [
    "OutcomeTag",
    "BlowupLimit",
    "ComposerOptions",
    "ComposedSample",
    "AmbientFlowRun",
    "FlowOutcome",
    "BlowupResult",
    "compose_point",
    "simulate",
    "classify_outcome",
    "blowup_rescale",
]


class OutcomeTag(str, enum.Enum):
    CollapseSphericalRoundPoint = "CollapseSphericalRoundPoint"
    CollapsePole = "CollapsePole"
    ConvergePsiMinimal = "ConvergePsiMinimal"
    EscapeParabolicPsiMinimalAtInfinity = "EscapeParabolicPsiMinimalAtInfinity"
    EscapeHyperbolicCurveAtInfinity = "EscapeHyperbolicCurveAtInfinity"
    EscapeHyperbolicPointAtInfinity = "EscapeHyperbolicPointAtInfinity"
    Undetermined = "Undetermined"


class BlowupLimit(str, enum.Enum):
    PsiMinimal = "PsiMinimal"
    RoundPoint = "RoundPoint"
    # finite ttilde at the pole with the sphere flow still regular there
    Curve = "Curve"


@dataclass(frozen=True)
class ComposerOptions:
    """Budgets and tolerances of :func:`simulate` and :func:`classify_outcome`.

    ``t_budget`` bounds the radial flow time, ``ttilde_budget`` the sphere
    flow time; ``snapshot_every`` is in ``ttilde`` units.
    """

    t_budget: float = 50.0
    ttilde_budget: float = 20.0
    snapshot_every: float = 0.05
    time_match_tol: float = 1e-3
    radial: RadialOptions = field(default_factory=RadialOptions)
    flow: FlowOptions = field(default_factory=FlowOptions)

    def validate(self):
        for name in ("t_budget", "ttilde_budget", "snapshot_every", "time_match_tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive and finite, got {v!r}")
        if self.snapshot_every > self.ttilde_budget:
            raise ConfigurationError("snapshot_every exceeds ttilde_budget")


@dataclass(frozen=True)
class ComposedSample:
    """The ambient curve at flow time ``t``: nodes of ``snapshot`` on ``S_R``."""

    t: float
    ttilde: float
    R: float
    snapshot: int


@dataclass
class AmbientFlowRun:
    radial: RadialTrajectory
    sphere_snapshots: list
    composed_samples: list
    sphere_status: str
    sphere_singular_at: Optional[float]
    sphere_singularity: object
    sphere_target: float
    flow: SphereFlow = field(repr=False)
    space: WarpedSpace = field(repr=False)
    density: DensitySpec = field(repr=False)
    opts: ComposerOptions = field(repr=False)
    fingerprint: str = ""

    @property
    def r0(self) -> float:
        return self.radial.r0

    def composed_curve(self, i: int) -> SphericalCurve:
        """Composed sample ``i`` as a curve on the geodesic sphere of radius ``R``."""
        s = self.composed_samples[i]
        curve = self.sphere_snapshots[s.snapshot][1]
        return curve.with_radius(float(self.space.w(s.R)))


@dataclass(frozen=True)
class FlowOutcome:
    tag: OutcomeTag
    details: dict
    evidence: dict


@dataclass(frozen=True)
class BlowupResult:
    snapshots: list
    limit: Optional[BlowupLimit]


def compose_point(sphere_point, R: float):
    """Product coordinates ``(r, p)`` of the radial geodesic from ``p`` to radius ``R``."""
    if R < 0:
        raise ValueError("R must be non-negative")
    p = np.asarray(sphere_point, dtype=float)
    return float(R), p.copy()


def _sphere_target(traj: RadialTrajectory, opts: ComposerOptions) -> float:
    ev, lim = traj.terminal_event, traj.ttilde_limit
    if isinstance(ev, RootConvergence):
        return opts.ttilde_budget
    if isinstance(ev, (Escape, PoleHit)):
        if lim is None:
            return traj.ttilde_end
        if math.isinf(lim):
            return opts.ttilde_budget
        return min(lim * (1.0 + opts.time_match_tol), max(opts.ttilde_budget, lim))
    return traj.ttilde_end


def _t_of(traj: RadialTrajectory, space: WarpedSpace, tt: float) -> Optional[tuple]:
    """``(t, R)`` at sphere time ``tt``, or None past the radial record."""
    ev = traj.terminal_event
    if tt <= traj.ttilde_end:
        t = invert_time_change(traj, tt)
        return t, traj.R_at(t)
    if isinstance(ev, RootConvergence):
        # on the B-minimal sphere the time change runs at a constant rate
        rate = math.exp(2.0 * (float(space.log_w(traj.r0)) - float(space.log_w(ev.r_star))))
        return traj.t_end + (tt - traj.ttilde_end) / rate, ev.r_star
    return None


def simulate(space: WarpedSpace, density: DensitySpec, initial: SphericalCurve, r0: float,
             opts: Optional[ComposerOptions] = None, fingerprint: str = "",
             progress=None) -> AmbientFlowRun:
    """Run the radial ODE and the sphere flow and pair them through the time change.

    ``initial`` is rescaled to the sphere radius ``w(r0)``.  Snapshots of the
    sphere flow are kept every ``opts.snapshot_every`` (plus one at the
    terminal ``ttilde``); each snapshot inside the radial record yields a
    composed sample.
    """
    opts = opts or ComposerOptions()
    opts.validate()
    space.check_radius(r0)
    if not check_embedded(initial):
        raise ConfigurationError("initial curve is not embedded")
    traj = integrate_radial(space, density, r0, opts.t_budget, opts.radial)
    rho = float(space.w(r0))
    flow = SphereFlow(initial.with_radius(rho), density, opts.flow)
    target = _sphere_target(traj, opts)

    marks = list(np.arange(0.0, target, opts.snapshot_every)[1:])
    lim = traj.ttilde_limit
    if lim is not None and math.isfinite(lim) and 0 < lim < target:
        marks.append(lim)
    marks.append(target)
    marks = sorted(set(marks))

    snapshots = [(0.0, flow.curve)]
    for m in marks:
        status = flow.advance_to(m)
        snapshots.append((flow.ttilde, flow.curve))
        if progress is not None:
            progress(flow.ttilde, target)
        if status not in ("running", "psi_minimal"):
            break

    samples = []
    for k, (tt, _) in enumerate(snapshots):
        tr = _t_of(traj, space, tt)
        if tr is None:
            continue
        samples.append(ComposedSample(t=float(tr[0]), ttilde=float(tt), R=float(tr[1]), snapshot=k))

    return AmbientFlowRun(
        radial=traj,
        sphere_snapshots=snapshots,
        composed_samples=samples,
        sphere_status=flow.status,
        sphere_singular_at=flow.singular_at,
        sphere_singularity=flow.singularity,
        sphere_target=target,
        flow=flow,
        space=space,
        density=density,
        opts=opts,
        fingerprint=fingerprint,
    )


def _radius_at_ttilde(run: AmbientFlowRun, tt: float):
    tr = _t_of(run.radial, run.space, tt)
    if tr is None:
        return float(run.radial.R[-1]), float(run.radial.t[-1]), False
    return float(tr[1]), float(tr[0]), True


def _tail_hypotheses(run: AmbientFlowRun) -> dict:
    # B on the sampled part of [r0, r_max]; the limits are out of numerical reach
    R = run.radial.R
    tail = R[int(0.9 * (R.size - 1)):]
    B = np.asarray(eval_B(run.space, run.density, tail), dtype=float)
    return {
        "B_tail_min": float(B.min()),
        "B_tail_max": float(B.max()),
        "liminf_B_finite_on_sample": bool(np.isfinite(B.min())),
        "limsup_B_nonzero_on_sample": bool(B.max() < -1e-12 or B.min() > 1e-12),
        "sampled_r_max": float(R.max()),
    }


def _evidence(run: AmbientFlowRun) -> dict:
    d = run.flow.diagnostics
    return {
        "t_end": run.radial.t_end,
        "ttilde_end": run.radial.ttilde_end,
        "ttilde_limit": run.radial.ttilde_limit,
        "R_end": float(run.radial.R[-1]),
        "sphere_ttilde": run.flow.ttilde,
        "sphere_steps": run.flow.steps,
        "length_end": d.length,
        "area_fraction_end": d.area_fraction,
        "radial_terminal": run.radial.terminal_event.name,
        "sphere_status": run.sphere_status,
        "sphere_singular_at": run.sphere_singular_at,
        "monotone_violations": run.flow.monotone_violations,
        "embedding_failures": len(run.flow.embedding_failures),
    }


def _undetermined(reason: str, evidence: dict) -> FlowOutcome:
    return FlowOutcome(OutcomeTag.Undetermined, {"reason": reason}, evidence)


def _snapshot_at(run: AmbientFlowRun, tt: float) -> SphericalCurve:
    best = min(run.sphere_snapshots, key=lambda s: abs(s[0] - tt))
    return best[1]


def classify_outcome(run: AmbientFlowRun, space: Optional[WarpedSpace] = None,
                     density: Optional[DensitySpec] = None,
                     opts: Optional[ComposerOptions] = None) -> FlowOutcome:
    """Decide the fate of the ambient flow from the two component runs."""
    opts = opts or run.opts
    space = space or run.space
    ev = run.radial.terminal_event
    lim = run.radial.ttilde_limit
    tol = opts.time_match_tol
    evidence = _evidence(run)
    st = run.sphere_status
    t_star = run.sphere_singular_at

    if st == "blowup":
        return _undetermined("sphere flow curvature blow-up (numerical distress)", evidence)

    # range of ttilde covered by the ambient flow
    if isinstance(ev, RootConvergence):
        tt_range = math.inf
    elif isinstance(ev, Budget) or lim is None:
        tt_range = run.radial.ttilde_end
    else:
        tt_range = lim

    # (1) sphere flow collapses while the ambient flow still exists
    if st == "round_point":
        if t_star < tt_range * (1.0 - tol):
            R, t, inside = _radius_at_ttilde(run, t_star)
            details = {
                "t_end": t,
                "radius": R,
                "location": list(run.sphere_singularity.location),
                "ttilde_star": float(t_star),
            }
            if not inside:
                details["note"] = "collapse past the radial record; radius is the last sampled R"
            return FlowOutcome(OutcomeTag.CollapseSphericalRoundPoint, details, evidence)

    if isinstance(ev, Budget):
        return _undetermined("radial flow exhausted its time budget", evidence)

    if isinstance(ev, PoleHit):
        res = blowup_rescale(run)
        if res.limit is None:
            return _undetermined("sphere flow unresolved at the pole time", evidence)
        return FlowOutcome(OutcomeTag.CollapsePole,
                           {"t_end": ev.t_hit, "blowup_limit": res.limit.value}, evidence)

    if isinstance(ev, RootConvergence):
        if st == "psi_minimal":
            return FlowOutcome(OutcomeTag.ConvergePsiMinimal,
                               {"R_infinity": ev.r_star, "limit_snapshot": len(run.sphere_snapshots) - 1},
                               evidence)
        return _undetermined("radius converged but the sphere flow did not settle "
                             f"(status {st})", evidence)

    if isinstance(ev, Escape):
        ctype = classify_conformal_type(space, run.r0, mode="numeric-tail")
        hyp = _tail_hypotheses(run)
        evidence = {**evidence, "conformal_type": ctype.value, "hypotheses": hyp}
        if lim is None:
            return _undetermined("time-change tail inconclusive", evidence)
        if ctype == ConformalType.PARABOLIC and math.isinf(lim):
            if st == "psi_minimal":
                return FlowOutcome(OutcomeTag.EscapeParabolicPsiMinimalAtInfinity,
                                   {"limit_snapshot": len(run.sphere_snapshots) - 1}, evidence)
            return _undetermined(f"parabolic escape, sphere flow status {st}", evidence)
        if ctype == ConformalType.HYPERBOLIC and math.isfinite(lim):
            if st == "round_point":
                if abs(t_star - lim) <= tol * lim:
                    return FlowOutcome(OutcomeTag.EscapeHyperbolicPointAtInfinity,
                                       {"point": list(run.sphere_singularity.location),
                                        "ttilde_star": float(t_star)}, evidence)
                return _undetermined("sphere collapse time inconsistent with the time-change limit",
                                     evidence)
            if run.flow.ttilde >= lim * (1.0 + tol) or st == "psi_minimal":
                curve = _snapshot_at(run, lim)
                return FlowOutcome(OutcomeTag.EscapeHyperbolicCurveAtInfinity,
                                   {"ttilde_limit": lim,
                                    "limit_snapshot": next(i for i, s in enumerate(run.sphere_snapshots)
                                                           if s[1] is curve)}, evidence)
            return _undetermined("sphere flow did not reach the time-change limit", evidence)
        return _undetermined(
            f"escape with conformal type {ctype.value} and ttilde limit {lim!r}", evidence)

    return _undetermined("unrecognized terminal event", evidence)


def blowup_rescale(run: AmbientFlowRun) -> BlowupResult:
    """Blow-up of the ambient flow at the pole.

    Rescaling the ambient flow radially back to ``S_{r0}`` reproduces the
    sphere flow, so the stored snapshots are the blow-up sequence; its limit
    follows the sphere flow's own fate.
    """
    ev = run.radial.terminal_event
    if not isinstance(ev, PoleHit):
        raise UsageError(f"blow-up rescaling needs a pole hit, terminal event is {ev.name}")
    lim = run.radial.ttilde_limit
    st = run.sphere_status
    tol = run.opts.time_match_tol
    limit = None
    if lim is None:
        limit = None
    elif math.isinf(lim):
        if st == "psi_minimal" and run.density.phi_extends_C1_to_zero:
            limit = BlowupLimit.PsiMinimal
    else:
        if st == "round_point" and abs(run.sphere_singular_at - lim) <= tol * lim:
            limit = BlowupLimit.RoundPoint
        elif st == "psi_minimal" or (st == "running" and run.flow.ttilde >= lim):
            limit = BlowupLimit.Curve
    return BlowupResult(snapshots=list(run.sphere_snapshots), limit=limit)
