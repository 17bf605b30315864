"""Closed-form solutions for Euclidean space with Gaussian radial density.

With ``w(r) = r`` and ``phi(r) = -mu^2 r^2 / 2`` we have ``B(r) = 1/r - mu^2 r``,
the radial ODE integrates explicitly and the enclosed area of the sphere flow
(with ``psi == 0``) follows from Gauss-Bonnet.  Everything here is exact
arithmetic on those formulas; the module is the reference the numerical
pipeline is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .composer import OutcomeTag
from .errors import ConfigurationError, RangeError

__all__ = [
    "GaussianConfig",
    "PastSingularityError",
    "R_exact",
    "ttilde_exact",
    "t_exact",
    "ttilde_limit",
    "t_pole",
    "area_exact",
    "ttilde_max_exact",
    "threshold_fraction",
    "classify_gaussian_case",
]

# mu * r0 is compared with 1 at this relative tolerance
_CRITICAL_RTOL = 1e-12


class PastSingularityError(RangeError):
    """The requested time lies beyond the pole-hit time."""


@dataclass(frozen=True)
class GaussianConfig:
    mu: float
    r0: float
    area_fraction0: float = 0.5

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("mu must be positive")
        if not self.r0 > 0:
            raise ConfigurationError("r0 must be positive")
        if not 0 < self.area_fraction0 <= 0.5:
            raise ConfigurationError("area_fraction0 must lie in (0, 1/2]")

    @property
    def m2(self) -> float:
        """``mu^2 r0^2``; the sign of ``m2 - 1`` decides the radial fate."""
        return (self.mu * self.r0) ** 2

    @property
    def critical(self) -> bool:
        return math.isclose(self.mu * self.r0, 1.0, rel_tol=_CRITICAL_RTOL)


def t_pole(cfg: GaussianConfig) -> float:
    """Pole-hit time when ``mu r0 < 1``, infinity otherwise."""
    if cfg.critical or cfg.m2 > 1:
        return math.inf
    return -math.log1p(-cfg.m2) / (2.0 * cfg.mu ** 2)


def _radicand(cfg: GaussianConfig, t: float) -> float:
    return 1.0 + (cfg.m2 - 1.0) * math.exp(2.0 * cfg.mu ** 2 * t)


def R_exact(cfg: GaussianConfig, t: float) -> float:
    """``R(t) = sqrt(1 + (mu^2 r0^2 - 1) e^{2 mu^2 t}) / mu``."""
    if t < 0:
        raise RangeError("t must be non-negative", limit=0.0)
    if cfg.critical:
        return cfg.r0
    rad = _radicand(cfg, t)
    if rad < 0:
        tp = t_pole(cfg)
        raise PastSingularityError(f"t={t!r} is past the pole-hit time {tp!r}", limit=tp)
    return math.sqrt(rad) / cfg.mu


def ttilde_limit(cfg: GaussianConfig) -> float:
    """Limit of ``ttilde(t)`` as ``t`` tends to the end of the radial flow."""
    if cfg.critical or cfg.m2 < 1:
        return math.inf
    return 0.5 * cfg.r0 ** 2 * math.log(cfg.m2 / (cfg.m2 - 1.0))


def ttilde_exact(cfg: GaussianConfig, t: float) -> float:
    """``ttilde(t) = (r0^2/2) ln(m2 e^{2 mu^2 t} / (1 + (m2 - 1) e^{2 mu^2 t}))``
    with ``m2 = mu^2 r0^2``."""
    if t < 0:
        raise RangeError("t must be non-negative", limit=0.0)
    if cfg.critical:
        return t
    m, y = cfg.m2, 2.0 * cfg.mu ** 2 * t
    if _radicand(cfg, t) <= 0:
        tp = t_pole(cfg)
        raise PastSingularityError(f"t={t!r} is not before the pole-hit time {tp!r}", limit=tp)
    half = 0.5 * cfg.r0 ** 2
    if m > 1 and (m - 1.0) * math.exp(y) > m:
        # close to the limit: distance to it, free of cancellation
        return ttilde_limit(cfg) - half * math.log1p(math.exp(-y) / (m - 1.0))
    return half * (y - math.log1p((m - 1.0) / m * math.expm1(y)))


def t_exact(cfg: GaussianConfig, ttilde: float) -> float:
    """Inverse of :func:`ttilde_exact`:
    ``t = ln(e^{2 tt/r0^2} / (m2 - (m2 - 1) e^{2 tt/r0^2})) / (2 mu^2)``."""
    if ttilde < 0:
        raise RangeError("ttilde must be non-negative", limit=0.0)
    if cfg.critical:
        return ttilde
    lim = ttilde_limit(cfg)
    if ttilde >= lim:
        raise RangeError(f"ttilde={ttilde!r} is not below the limit {lim!r}", limit=lim)
    m, x = cfg.m2, 2.0 * ttilde / cfg.r0 ** 2
    arg = m * math.expm1(-x)
    if m > 1 and arg < -0.5:
        y = -math.log((m - 1.0) * math.expm1(2.0 * (lim - ttilde) / cfg.r0 ** 2))
    else:
        y = -math.log1p(arg)
    return y / (2.0 * cfg.mu ** 2)


def ttilde_max_exact(cfg: GaussianConfig) -> float:
    """Time at which the enclosed area reaches zero; infinite for a hemisphere."""
    if cfg.area_fraction0 == 0.5:
        return math.inf
    # 2 pi r0^2 / (2 pi r0^2 - A0) = 1 / (1 - 2 f0)
    return -cfg.r0 ** 2 * math.log1p(-2.0 * cfg.area_fraction0)


def area_exact(cfg: GaussianConfig, ttilde: float) -> float:
    """``A(tt) = 2 pi r0^2 - (2 pi r0^2 - A0) e^{tt / r0^2}``."""
    tmax = ttilde_max_exact(cfg)
    if ttilde < 0 or ttilde > tmax:
        raise RangeError(f"ttilde={ttilde!r} outside [0, {tmax!r}]", limit=tmax)
    half = 2.0 * math.pi * cfg.r0 ** 2
    a0 = 4.0 * math.pi * cfg.r0 ** 2 * cfg.area_fraction0
    return half - (half - a0) * math.exp(ttilde / cfg.r0 ** 2)


def threshold_fraction(cfg: GaussianConfig) -> float:
    """Initial area fraction separating collapse from escape when ``mu r0 > 1``.

    For ``mu r0 <= 1`` only the hemisphere avoids collapse and 1/2 is returned.
    """
    if cfg.critical or cfg.m2 <= 1:
        return 0.5
    return 0.5 * (1.0 - math.sqrt((cfg.m2 - 1.0) / cfg.m2))


def classify_gaussian_case(cfg: GaussianConfig) -> OutcomeTag:
    """Predicted outcome for ``psi == 0``; the threshold itself is honored exactly."""
    f = cfg.area_fraction0
    if cfg.critical:
        return OutcomeTag.ConvergePsiMinimal if f == 0.5 else OutcomeTag.CollapseSphericalRoundPoint
    if cfg.m2 < 1:
        return OutcomeTag.CollapsePole if f == 0.5 else OutcomeTag.CollapseSphericalRoundPoint
    thr = threshold_fraction(cfg)
    if f > thr:
        return OutcomeTag.EscapeHyperbolicCurveAtInfinity
    if f == thr:
        return OutcomeTag.EscapeHyperbolicPointAtInfinity
    return OutcomeTag.CollapseSphericalRoundPoint
