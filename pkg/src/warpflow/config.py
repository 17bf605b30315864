"""Run configuration: a strict YAML schema and its translation into objects.

Every mapping rejects unknown keys so a stored config always describes the
run that produced the outputs next to it.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import space as sp
from .composer import ComposerOptions
from .errors import ConfigurationError
from .radial import RadialOptions
from .sphere_flow import (
    FlowOptions,
    SingularityOptions,
    SphericalCurve,
    make_fourier_curve,
    make_latitude_circle,
    theta_for_fraction,
)

__all__ = ["RunConfig", "load_config", "parse_config", "build_space", "build_density",
           "build_initial", "build_options"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]


# ---------------------------------------------------------------- space

class EuclideanSpace(_Strict):
    kind: Literal["euclidean"]


class HyperbolicSpace(_Strict):
    kind: Literal["hyperbolic"]


class PowerSpace(_Strict):
    kind: Literal["power"]
    p: PositiveFloat
    C: PositiveFloat = 1.0


class TabulatedSpace(_Strict):
    kind: Literal["tabulated"]
    table: str = Field(description="two-column text file: r w(r)")
    tail: Optional[Literal["power", "sinh"]] = None
    tail_power: Optional[PositiveFloat] = None


SpaceConfig = Annotated[Union[EuclideanSpace, HyperbolicSpace, PowerSpace, TabulatedSpace],
                        Field(discriminator="kind")]


# ---------------------------------------------------------------- density

class NoPhi(_Strict):
    kind: Literal["none"]


class GaussianPhi(_Strict):
    kind: Literal["gaussian"]
    mu: PositiveFloat


class LogPowerPhi(_Strict):
    """``phi = a ln r + b r^2 / 2 + c / r``."""

    kind: Literal["log_power"]
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0


PhiConfig = Annotated[Union[NoPhi, GaussianPhi, LogPowerPhi], Field(discriminator="kind")]


class ZeroPsi(_Strict):
    kind: Literal["zero"]


class ConstantPsi(_Strict):
    kind: Literal["constant"]
    c: float


class ZSquaredPsi(_Strict):
    kind: Literal["z_squared"]
    a: float = 1.0


class TablePsi(_Strict):
    """Values on a polar-angle x longitude grid, interpolated bilinearly.

    The file holds a header line with the polar angles, a second with the
    longitudes, then one row of values per polar angle.
    """

    kind: Literal["table"]
    table: str


PsiConfig = Annotated[Union[ZeroPsi, ConstantPsi, ZSquaredPsi, TablePsi],
                      Field(discriminator="kind")]


class DensityConfig(_Strict):
    phi: PhiConfig = NoPhi(kind="none")
    psi: PsiConfig = ZeroPsi(kind="zero")


# ---------------------------------------------------------------- initial curve

class LatitudeCurve(_Strict):
    kind: Literal["latitude"]
    theta0: Optional[float] = Field(default=None, gt=0, le=math.pi / 2)
    area_fraction: Optional[float] = Field(default=None, gt=0, le=0.5)

    def polar_angle(self) -> float:
        if (self.theta0 is None) == (self.area_fraction is None):
            raise ConfigurationError("latitude curve needs exactly one of theta0, area_fraction")
        if self.theta0 is not None:
            return self.theta0
        return theta_for_fraction(self.area_fraction)


class FourierCurve(_Strict):
    kind: Literal["fourier"]
    theta0: float = Field(gt=0, lt=math.pi)
    coefficients: Dict[int, Tuple[float, float]] = Field(default_factory=dict)


InitialConfig = Annotated[Union[LatitudeCurve, FourierCurve], Field(discriminator="kind")]


# ---------------------------------------------------------------- solver

class SolverConfig(_Strict):
    N: int = 128
    cfl: PositiveFloat = 0.25
    reparam_every: int = Field(default=25, ge=0)
    diag_every: int = Field(default=10, ge=1)
    embed_check_every: int = Field(default=100, ge=0)
    max_steps: int = Field(default=5_000_000, ge=1)
    snapshot_every: PositiveFloat = 0.05
    t_budget: PositiveFloat = 50.0
    ttilde_budget: PositiveFloat = 20.0
    time_match_tol: PositiveFloat = 1e-3
    rtol: PositiveFloat = 1e-10
    pole_eps: Optional[PositiveFloat] = None
    root_eps: Optional[PositiveFloat] = None
    r_max: Optional[PositiveFloat] = None
    root_steps: int = Field(default=10, ge=1)
    radial_max_steps: int = Field(default=200_000, ge=1)
    window: int = Field(default=50, ge=1)
    len_eps: PositiveFloat = 1e-3
    kpsi_eps: PositiveFloat = 1e-5
    blowup_ratio: PositiveFloat = 1e3
    round_tol: PositiveFloat = 0.05

    @field_validator("N")
    @classmethod
    def _n_large_enough(cls, v):
        if v < 16:
            raise ValueError("N >= 16 required")
        return v

    @field_validator("cfl")
    @classmethod
    def _cfl_stable(cls, v):
        if v > 0.5:
            raise ValueError("cfl <= 0.5 required for the explicit scheme")
        return v


class RunConfig(_Strict):
    space: SpaceConfig
    density: DensityConfig = DensityConfig()
    initial: InitialConfig
    r0: PositiveFloat
    solver: SolverConfig = SolverConfig()
    output: str = "warpflow_out"
    base_dir: Optional[str] = Field(default=None, exclude=True)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return p


def _validation_message(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"])
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict, base_dir: Optional[str] = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping at the top level")
    try:
        cfg = RunConfig.model_validate({**data, "base_dir": base_dir} if base_dir else data)
    except ValidationError as exc:
        raise ConfigurationError(_validation_message(exc)) from None
    if isinstance(cfg.initial, LatitudeCurve):
        cfg.initial.polar_angle()
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a YAML run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigurationError(f"{where}: {exc.problem}") from None
    return parse_config(data, base_dir=str(path.parent))


# ---------------------------------------------------------------- builders

def build_space(cfg: RunConfig) -> sp.WarpedSpace:
    s = cfg.space
    if s.kind == "euclidean":
        return sp.euclidean()
    if s.kind == "hyperbolic":
        return sp.hyperbolic()
    if s.kind == "power":
        return sp.power(s.p, s.C)
    table = np.loadtxt(cfg.resolve(s.table), ndmin=2)
    return sp.tabulated(table[:, 0], table[:, 1], tail=s.tail, tail_power=s.tail_power)


def build_density(cfg: RunConfig) -> sp.DensitySpec:
    phi, psi = cfg.density.phi, cfg.density.psi
    if phi.kind == "none":
        radial = sp.no_radial_density()
    elif phi.kind == "gaussian":
        radial = sp.gaussian(phi.mu)
    else:
        radial = sp.log_power(phi.a, phi.b, phi.c)
    if psi.kind == "zero":
        angular = sp.zero_psi()
    elif psi.kind == "constant":
        angular = sp.constant_psi(psi.c)
    elif psi.kind == "z_squared":
        angular = sp.z_squared(psi.a)
    else:
        with open(cfg.resolve(psi.table)) as fh:
            theta = np.array(fh.readline().split(), dtype=float)
            lon = np.array(fh.readline().split(), dtype=float)
            values = np.loadtxt(fh, ndmin=2)
        angular = sp.psi_table(theta, lon, values)
    return sp.DensitySpec(radial, angular)


def build_initial(cfg: RunConfig, space: sp.WarpedSpace) -> SphericalCurve:
    ini = cfg.initial
    rho = float(space.w(cfg.r0))
    if ini.kind == "latitude":
        return make_latitude_circle(ini.polar_angle(), cfg.solver.N, rho)
    coeffs = {int(k): (float(a), float(b)) for k, (a, b) in ini.coefficients.items()}
    return make_fourier_curve(ini.theta0, coeffs, cfg.solver.N, rho)


def build_options(cfg: RunConfig) -> ComposerOptions:
    s = cfg.solver
    return ComposerOptions(
        t_budget=s.t_budget,
        ttilde_budget=s.ttilde_budget,
        snapshot_every=s.snapshot_every,
        time_match_tol=s.time_match_tol,
        radial=RadialOptions(rtol=s.rtol, pole_eps=s.pole_eps, root_eps=s.root_eps,
                             r_max=s.r_max, root_steps=s.root_steps,
                             max_steps=s.radial_max_steps),
        flow=FlowOptions(
            cfl=s.cfl, reparam_every=s.reparam_every, diag_every=s.diag_every,
            embed_check_every=s.embed_check_every, max_steps=s.max_steps,
            singularity=SingularityOptions(window=s.window, len_eps=s.len_eps,
                                           kpsi_eps=s.kpsi_eps, blowup_ratio=s.blowup_ratio,
                                           round_tol=s.round_tol),
        ),
    )
