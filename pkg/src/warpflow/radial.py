"""Radial dynamics ``R'(t) = -B(R)`` together with the time change.

The sphere radius obeys an autonomous ODE and the fixed-sphere flow runs in
the transformed time ``ttilde(t) = int_0^t (w(r0)/w(R))^2 dt``.  Both are
integrated as one state ``(R, ttilde)`` with a Dormand-Prince 5(4) pair.

Near the pole ``R ~ sqrt(T - t)`` and stepping in ``t`` underflows long
before ``R`` reaches the cutoff, so once the trajectory is heading into the
pole with no B-minimal sphere in the way the integrator switches to
``s = ln R`` as independent variable, where the system
``dt/ds = -R/B(R)``, ``dttilde/ds = -R (w(r0)/w(R))^2 / B(R)`` is smooth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import optimize
from scipy.integrate import RK45

from .errors import IntegrationError, RangeError
from .space import DensitySpec, WarpedSpace, _geometric_tail_verdict, _log_window_integral, eval_B

__all__ = [
    "PoleHit",
    "RootConvergence",
    "Escape",
    "Budget",
    "RadialOptions",
    "RadialTrajectory",
    "integrate_radial",
    "time_change_of",
    "invert_time_change",
]


@dataclass(frozen=True)
class PoleHit:
    t_hit: float
    name = "PoleHit"


@dataclass(frozen=True)
class RootConvergence:
    r_star: float
    t: float
    name = "RootConvergence"


@dataclass(frozen=True)
class Escape:
    r_max: float
    t: float
    name = "Escape"


@dataclass(frozen=True)
class Budget:
    t_end: float
    name = "Budget"


TerminalEvent = Union[PoleHit, RootConvergence, Escape, Budget]


@dataclass(frozen=True)
class RadialOptions:
    """Tolerances for :func:`integrate_radial`.

    ``pole_eps``, ``root_eps`` and ``r_max`` default to ``1e-8 r0``,
    ``1e-9 r0`` and ``1e6 r0``.
    """

    rtol: float = 1e-10
    pole_eps: Optional[float] = None
    root_eps: Optional[float] = None
    r_max: Optional[float] = None
    root_steps: int = 10
    pole_switch: float = 1e-2
    max_steps: int = 200_000

    def resolved(self, r0: float) -> "RadialOptions":
        return RadialOptions(
            rtol=self.rtol,
            pole_eps=self.pole_eps if self.pole_eps is not None else 1e-8 * r0,
            root_eps=self.root_eps if self.root_eps is not None else 1e-9 * r0,
            r_max=self.r_max if self.r_max is not None else 1e6 * r0,
            root_steps=self.root_steps,
            pole_switch=self.pole_switch,
            max_steps=self.max_steps,
        )


@dataclass(frozen=True)
class _Segment:
    # one accepted step; kind "t": y(x) = (R, ttilde) with x = t,
    # kind "s": y(x) = (t, ttilde) with x = ln R
    kind: str
    t0: float
    t1: float
    x0: float
    x1: float
    dense: object


@dataclass(frozen=True)
class RadialTrajectory:
    """Sampled radial path ``(t, R(t), ttilde(t))`` with its terminal event.

    ``ttilde_limit`` is ``math.inf`` when the time change is unbounded, a float
    when it converges and ``None`` when the tail test was inconclusive.
    """

    r0: float
    t: np.ndarray
    R: np.ndarray
    ttilde: np.ndarray
    terminal_event: TerminalEvent
    ttilde_limit: Optional[float]
    segments: tuple = field(repr=False, default=())

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.R.tolist(), self.ttilde.tolist()))

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def ttilde_end(self) -> float:
        return float(self.ttilde[-1])

    def _segment_for(self, t: float) -> _Segment:
        if not 0.0 <= t <= self.t_end:
            raise RangeError(f"t={t!r} outside the sampled range [0, {self.t_end!r}]",
                             limit=self.t_end)
        starts = self._starts
        i = int(np.searchsorted(starts, t, side="right")) - 1
        return self.segments[max(0, min(i, len(self.segments) - 1))]

    @property
    def _starts(self):
        return np.array([seg.t0 for seg in self.segments])

    def state_at(self, t: float) -> tuple[float, float]:
        """``(R(t), ttilde(t))`` from the integrator's dense output."""
        if t == 0.0:
            return self.r0, 0.0
        seg = self._segment_for(t)
        if seg.kind == "t":
            R, tt = seg.dense(min(max(t, seg.x0), seg.x1))
            return float(R), float(tt)
        lo, hi = sorted((seg.x0, seg.x1))
        g = lambda s: float(seg.dense(s)[0]) - t
        glo, ghi = g(lo), g(hi)
        if glo * ghi > 0:
            s = lo if abs(glo) < abs(ghi) else hi
        else:
            s = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return math.exp(s), float(seg.dense(s)[1])

    def R_at(self, t: float) -> float:
        return self.state_at(t)[0]


def time_change_of(traj: RadialTrajectory, t: float) -> float:
    """``ttilde(t)``; exactly 0 at ``t = 0``."""
    return traj.state_at(t)[1]


def invert_time_change(traj: RadialTrajectory, ttilde: float) -> float:
    """Inverse of :func:`time_change_of` on the sampled range."""
    if ttilde == 0.0:
        return 0.0
    if traj.ttilde_end < ttilde <= traj.ttilde_end * (1.0 + 1e-12):
        ttilde = traj.ttilde_end
    if not 0.0 <= ttilde <= traj.ttilde_end:
        raise RangeError(
            f"ttilde={ttilde!r} beyond the accumulated range [0, {traj.ttilde_end!r}] "
            f"(ttilde_limit={traj.ttilde_limit!r})",
            limit=traj.ttilde_limit,
        )
    if ttilde == traj.ttilde_end:
        return traj.t_end
    i = int(np.searchsorted(traj.ttilde, ttilde, side="right")) - 1
    lo, hi = float(traj.t[i]), float(traj.t[min(i + 1, traj.t.size - 1)])
    g = lambda t: time_change_of(traj, t) - ttilde
    if g(lo) * g(hi) > 0:
        lo, hi = 0.0, traj.t_end
    return optimize.brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _no_root_between(space, density, a: float, b: float) -> bool:
    grid = np.geomspace(a, b, 1024)
    return bool(np.all(np.asarray(eval_B(space, density, grid)) > 0))


def _ttilde_tail(space, density, r0, R_end, upward: bool):
    """Limit of ttilde past ``R_end``: dyadic windows in ``r`` of
    ``(w(r0)/w(r))^2 / |B(r)|``, the tail rule shared with the conformal test."""
    log_w0 = float(space.log_w(r0))
    sign = -1.0 if upward else 1.0

    def log_integrand(r):
        b = sign * float(eval_B(space, density, r))
        if not b > 0:
            raise ValueError
        return 2.0 * (log_w0 - float(space.log_w(r))) - math.log(b)

    windows = []
    try:
        for k in range(40):
            if upward:
                a, b = R_end * 2.0 ** k, R_end * 2.0 ** (k + 1)
            else:
                a, b = R_end * 2.0 ** -(k + 1), R_end * 2.0 ** -k
                if a <= space.domain_floor:
                    break
            windows.append(_log_window_integral(log_integrand, a, b))
    except (ValueError, OverflowError):
        return None, None
    verdict = _geometric_tail_verdict(windows)
    if verdict == "converges":
        return "converges", float(np.sum(windows))
    if verdict == "diverges":
        return "diverges", math.inf
    return None, None


def integrate_radial(space: WarpedSpace, density: DensitySpec, r0: float, t_budget: float,
                     opts: Optional[RadialOptions] = None) -> RadialTrajectory:
    """Integrate ``R' = -B(R)``, ``ttilde' = (w(r0)/w(R))^2`` from ``R(0) = r0``.

    Terminates at the first of: ``R <= pole_eps`` (:class:`PoleHit`), ``R``
    within ``root_eps`` of a B-root with ``|B|`` non-increasing for
    ``root_steps`` consecutive steps (:class:`RootConvergence`),
    ``R >= r_max`` (:class:`Escape`) or ``t = t_budget`` (:class:`Budget`).
    Crossing times are located on the dense output with Brent's method.

    Raises
    ------
    IntegrationError
        The step size underflowed; ``last_state`` holds ``(t, R, ttilde)``.
    """
    space.check_radius(r0)
    if not t_budget > 0:
        raise ValueError("t_budget must be positive")
    o = (opts or RadialOptions()).resolved(r0)
    floor = space.domain_floor
    log_w0 = float(space.log_w(r0))

    def B(r):
        return float(eval_B(space, density, r))

    def ratio(r):
        return math.exp(2.0 * (log_w0 - float(space.log_w(r))))

    def rhs_t(_t, y):
        R = y[0]
        if not R > floor or not math.isfinite(R):
            return np.array([np.nan, np.nan])
        return np.array([-B(R), ratio(R)])

    def rhs_s(s, _y):
        R = math.exp(s)
        if not R > floor:
            return np.array([np.nan, np.nan])
        b = B(R)
        return np.array([-R / b, -R * ratio(R) / b])

    t_list, R_list, tt_list = [0.0], [r0], [0.0]
    segments: list[_Segment] = []
    B0 = B(r0)
    first = min(t_budget, 1e-3 * r0 / abs(B0)) if B0 != 0.0 else t_budget * 1e-6
    atol = np.array([o.rtol * 1e-4 * r0, o.rtol * 1e-4])
    # the step cap leaves room for root_steps consecutive checks before the budget
    solver = RK45(rhs_t, 0.0, np.array([r0, 0.0]), t_budget, rtol=o.rtol, atol=atol,
                  first_step=first, max_step=t_budget / (2 * o.root_steps))

    def fail(msg):
        raise IntegrationError(
            f"radial integration failed at t={t_list[-1]!r}, R={R_list[-1]!r}: {msg}",
            last_state=(t_list[-1], R_list[-1], tt_list[-1]),
        )

    def record(t, R, tt):
        if t > t_list[-1]:
            t_list.append(t)
            R_list.append(R)
            tt_list.append(tt)
        else:
            R_list[-1], tt_list[-1] = R, tt

    event: Optional[TerminalEvent] = None
    near_root = 0
    B_prev = abs(B0)
    phase = "t"
    steps = 0
    while event is None:
        steps += 1
        if steps > o.max_steps:
            fail("step budget exhausted")
        t_old = solver.t
        msg = solver.step()
        if solver.status == "failed":
            fail(msg)
        dense = solver.dense_output()

        if phase == "t":
            t_new = solver.t
            R_new, tt_new = solver.y
            if R_new <= o.pole_eps or R_new >= o.r_max:
                level = o.pole_eps if R_new <= o.pole_eps else o.r_max
                t_hit = optimize.brentq(lambda x: dense(x)[0] - level, t_old, t_new,
                                        xtol=1e-15, rtol=o.rtol)
                segments.append(_Segment("t", t_old, t_hit, t_old, t_hit, dense))
                record(t_hit, float(level), float(dense(t_hit)[1]))
                event = (PoleHit(float(t_hit)) if level == o.pole_eps
                         else Escape(o.r_max, float(t_hit)))
                break
            segments.append(_Segment("t", t_old, t_new, t_old, t_new, dense))
            record(t_new, float(R_new), float(tt_new))

            if solver.status == "finished":
                event = Budget(float(t_new))
                break

            b = B(R_new)
            if b == 0.0:
                delta, noise = 0.0, 0.0
            else:
                hb = 1e-6 * R_new
                db = (B(R_new + hb) - B(R_new - hb)) / (2 * hb)
                delta = b / db if db != 0.0 else math.inf
                # |B| jitter caused by the integration error in R itself
                noise = 10.0 * o.rtol * R_new * abs(db)
            if abs(delta) <= o.root_eps and abs(b) <= B_prev + noise:
                near_root += 1
            else:
                near_root = 0
            B_prev = abs(b)
            if near_root >= o.root_steps:
                r_star = R_new - delta
                pad = 4 * abs(delta) + 1e-15 * R_new
                if b != 0.0 and B(r_star - pad) * B(r_star + pad) < 0:
                    r_star = optimize.brentq(B, r_star - pad, r_star + pad, xtol=1e-16)
                event = RootConvergence(float(r_star), float(t_new))
                break

            if (b > 0 and R_new <= o.pole_switch * r0
                    and _no_root_between(space, density, o.pole_eps, R_new)):
                phase = "s"
                s0, s_end = math.log(R_new), math.log(o.pole_eps)
                atol_s = np.array([o.rtol * 1e-4 * max(t_new, 1.0), o.rtol * 1e-4])
                solver = RK45(rhs_s, s0, np.array([t_new, tt_new]), s_end, rtol=o.rtol,
                              atol=atol_s)
        else:
            s_old, s_new = t_old, solver.t
            t_new, tt_new = solver.y
            if t_new >= t_budget:
                s_b = optimize.brentq(lambda s: dense(s)[0] - t_budget, s_new, s_old,
                                      xtol=1e-15, rtol=o.rtol)
                segments.append(_Segment("s", t_list[-1], t_budget, s_old, s_b, dense))
                record(t_budget, math.exp(s_b), float(dense(s_b)[1]))
                event = Budget(t_budget)
                break
            segments.append(_Segment("s", t_list[-1], float(t_new), s_old, s_new, dense))
            record(float(t_new), math.exp(s_new), float(tt_new))
            if solver.status == "finished":
                R_list[-1] = o.pole_eps
                event = PoleHit(t_list[-1])
                break

    t_arr = np.array(t_list)
    tt_arr = np.array(tt_list)
    if isinstance(event, RootConvergence):
        limit: Optional[float] = math.inf
    elif isinstance(event, Budget):
        limit = None
    else:
        upward = isinstance(event, Escape)
        verdict, tail = _ttilde_tail(space, density, r0, R_list[-1], upward)
        if verdict == "converges":
            limit = float(tt_arr[-1] + tail)
        elif verdict == "diverges":
            limit = math.inf
        else:
            limit = None
    return RadialTrajectory(
        r0=float(r0),
        t=t_arr,
        R=np.array(R_list),
        ttilde=tt_arr,
        terminal_event=event,
        ttilde_limit=limit,
        segments=tuple(segments),
    )
