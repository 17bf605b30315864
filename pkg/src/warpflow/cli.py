"""Command line entry point: ``warpflow run | grid | oracle``.

Outputs (under the config's ``output`` directory, or ``$WARPFLOW_OUT``):

``timeseries.csv``
    one row per composed sample, columns
    ``t,ttilde,R,length,weighted_length,max_abs_k_psi,area_fraction``.
``snapshots/snap_NNNNN.txt``
    sphere-flow snapshots in the curve snapshot format.
``report.json``
    configuration, terminal events, outcome tag and evidence.
``phase_matrix.csv`` (grid only)
    ``index,r0,theta0,area_fraction0,outcome_tag,oracle_tag,agree,error``.

Exit status: 0 for a classified outcome, 2 for Undetermined, 1 on error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__
from .composer import OutcomeTag, classify_outcome, simulate
from .config import (
    LatitudeCurve,
    RunConfig,
    build_density,
    build_initial,
    build_options,
    build_space,
    load_config,
)
from .errors import WarpflowError
from .gaussian_oracle import (
    GaussianConfig,
    classify_gaussian_case,
    t_pole,
    threshold_fraction,
    ttilde_limit,
    ttilde_max_exact,
)
from .sphere_flow import curve_diagnostics

log = logging.getLogger("warpflow")

EXIT_OK, EXIT_ERROR, EXIT_UNDETERMINED = 0, 1, 2
TIMESERIES_COLUMNS = ["t", "ttilde", "R", "length", "weighted_length", "max_abs_k_psi",
                      "area_fraction"]
MATRIX_COLUMNS = ["index", "r0", "theta0", "area_fraction0", "outcome_tag", "oracle_tag",
                  "agree", "error"]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _output_dir(cfg: RunConfig, override: Optional[str] = None) -> Path:
    out = override or os.environ.get("WARPFLOW_OUT") or cfg.output
    return cfg.resolve(out) if not os.path.isabs(out) else Path(out)


def gaussian_config_of(cfg: RunConfig, area_fraction0: float = 0.5) -> Optional[GaussianConfig]:
    """The oracle configuration when ``cfg`` is Euclidean with Gaussian phi and psi == 0."""
    if (cfg.space.kind == "euclidean" and cfg.density.phi.kind == "gaussian"
            and cfg.density.psi.kind == "zero"):
        return GaussianConfig(cfg.density.phi.mu, cfg.r0, min(area_fraction0, 0.5))
    return None


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def execute(cfg: RunConfig, out_dir: Path) -> dict:
    """Simulate, classify and write all outputs of one run; returns the report."""
    space = build_space(cfg)
    density = build_density(cfg)
    initial = build_initial(cfg, space)
    opts = build_options(cfg)
    fingerprint = cfg.model_dump_json(exclude={"base_dir"})
    out_dir.mkdir(parents=True, exist_ok=True)
    snap_dir = out_dir / "snapshots"
    snap_dir.mkdir(exist_ok=True)

    run = simulate(space, density, initial, cfg.r0, opts, fingerprint=fingerprint)
    outcome = classify_outcome(run)

    ts_path = out_dir / "timeseries.csv"
    with open(ts_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMESERIES_COLUMNS)
        for i, s in enumerate(run.composed_samples):
            d = curve_diagnostics(run.composed_curve(i), density, s.ttilde)
            writer.writerow([_fmt(v) for v in (s.t, s.ttilde, s.R, d.length, d.weighted_length,
                                                d.max_abs_k_psi, d.area_fraction)])
    for k, (_, curve) in enumerate(run.sphere_snapshots):
        curve.save(snap_dir / f"snap_{k:05d}.txt")
    with open(snap_dir / "index.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["snapshot", "ttilde"])
        for k, (tt, _) in enumerate(run.sphere_snapshots):
            writer.writerow([k, _fmt(tt)])

    ev = run.radial.terminal_event
    report = {
        "version": __version__,
        "config": json.loads(fingerprint),
        "terminal_events": {
            "radial": {"name": ev.name, **ev.__dict__},
            "sphere": {"status": run.sphere_status, "ttilde": run.sphere_singular_at},
        },
        "outcome_tag": outcome.tag.value,
        "details": outcome.details,
        "evidence": {
            **outcome.evidence,
            "area_fraction_series_path": str(ts_path),
        },
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
    return report


def _error_report(cfg: Optional[RunConfig], out_dir: Optional[Path], exc: Exception) -> dict:
    report = {
        "version": __version__,
        "outcome_tag": None,
        "error": {"type": type(exc).__name__, "message": str(exc)},
    }
    if cfg is not None:
        report["config"] = json.loads(cfg.model_dump_json(exclude={"base_dir"}))
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "report.json", "w") as fh:
                json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
        except OSError:
            pass
    return report


def run_single(cfg: RunConfig, out_dir: Optional[Path] = None) -> int:
    out_dir = out_dir or _output_dir(cfg)
    try:
        report = execute(cfg, out_dir)
    except (WarpflowError, OSError, ValueError) as exc:
        log.error("run failed: %s", exc)
        _error_report(cfg, out_dir, exc)
        return EXIT_ERROR
    tag = report["outcome_tag"]
    print(f"{tag}  ({out_dir / 'report.json'})")
    return EXIT_UNDETERMINED if tag == OutcomeTag.Undetermined.value else EXIT_OK


def _cell_config(base: RunConfig, r0: float, theta0: Optional[float],
                 fraction: Optional[float]) -> RunConfig:
    if base.initial.kind == "latitude":
        initial = LatitudeCurve(kind="latitude", theta0=theta0, area_fraction=fraction)
    else:
        if fraction is not None:
            raise WarpflowError("area fractions apply to latitude initial curves only")
        initial = base.initial.model_copy(update={"theta0": theta0})
    return base.model_copy(update={"r0": r0, "initial": initial})


def _grid_cell(args) -> dict:
    index, cfg, out_dir = args
    row = {"index": index, "r0": cfg.r0, "theta0": "", "area_fraction0": "",
           "outcome_tag": "", "oracle_tag": "", "agree": "", "error": ""}
    try:
        space = build_space(cfg)
        initial = build_initial(cfg, space)
        d0 = curve_diagnostics(initial)
        theta = (cfg.initial.polar_angle() if cfg.initial.kind == "latitude"
                 else cfg.initial.theta0)
        row["theta0"] = theta
        # the oracle takes the exact cap fraction, not the polygon's
        f0 = (cfg.initial.area_fraction if getattr(cfg.initial, "area_fraction", None)
              else (1.0 - math.cos(theta)) / 2.0 if cfg.initial.kind == "latitude"
              else d0.area_fraction)
        row["area_fraction0"] = f0
        gcfg = gaussian_config_of(cfg, f0) if cfg.initial.kind == "latitude" else None
        if gcfg is not None:
            row["oracle_tag"] = classify_gaussian_case(gcfg).value
        report = execute(cfg, out_dir)
        row["outcome_tag"] = report["outcome_tag"]
        if gcfg is not None:
            row["agree"] = row["outcome_tag"] == row["oracle_tag"]
    except Exception as exc:  # a failing cell must not stop the grid
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def run_phase_grid(base: RunConfig, r0_values, theta0_values=None, fraction_values=None,
                   parallelism: int = 1, out_dir: Optional[Path] = None) -> int:
    """Run every (r0, initial) cell; the matrix is ordered by grid index."""
    if not r0_values or not (theta0_values or fraction_values):
        raise WarpflowError("grid must be non-empty")
    out_dir = out_dir or _output_dir(base)
    out_dir.mkdir(parents=True, exist_ok=True)
    shapes = ([(t, None) for t in theta0_values] if theta0_values
              else [(None, f) for f in fraction_values])
    jobs = []
    for r0 in r0_values:
        for theta0, fraction in shapes:
            i = len(jobs)
            cfg = _cell_config(base, r0, theta0, fraction)
            jobs.append((i, cfg, out_dir / "cells" / f"cell_{i:03d}"))
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_grid_cell, jobs))
    else:
        rows = [_grid_cell(j) for j in jobs]
    rows.sort(key=lambda r: r["index"])
    with open(out_dir / "phase_matrix.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MATRIX_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    for r in rows:
        print(f"{r['index']:3d} r0={r['r0']:<8g} {r['outcome_tag'] or r['error']}"
              + (f"  oracle={r['oracle_tag']} agree={r['agree']}" if r["oracle_tag"] else ""))
    if any(r["error"] for r in rows):
        return EXIT_ERROR
    if any(r["outcome_tag"] == OutcomeTag.Undetermined.value for r in rows):
        return EXIT_UNDETERMINED
    return EXIT_OK


def oracle_report(cfg: RunConfig) -> dict:
    if cfg.initial.kind == "latitude":
        theta = cfg.initial.polar_angle()
        f0 = cfg.initial.area_fraction or (1.0 - math.cos(theta)) / 2.0
    else:
        raise WarpflowError("the oracle needs a latitude initial curve")
    gcfg = gaussian_config_of(cfg, f0)
    if gcfg is None:
        raise WarpflowError("the oracle applies to euclidean space, gaussian phi and zero psi")
    return {
        "mu": gcfg.mu,
        "r0": gcfg.r0,
        "area_fraction0": gcfg.area_fraction0,
        "threshold_fraction": threshold_fraction(gcfg),
        "ttilde_max": ttilde_max_exact(gcfg),
        "ttilde_limit": ttilde_limit(gcfg),
        "t_pole": t_pole(gcfg),
        "predicted_outcome": classify_gaussian_case(gcfg).value,
    }


def _float_list(text: str):
    return [float(x) for x in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warpflow", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    p.add_argument("config")
    p.add_argument("-o", "--out", help="output directory (overrides config and WARPFLOW_OUT)")

    p = sub.add_parser("grid", help="phase-diagram sweep over r0 and the initial latitude")
    p.add_argument("config")
    p.add_argument("--r0", type=_float_list, required=True, help="comma separated radii")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta0", type=_float_list, help="comma separated polar angles")
    g.add_argument("--fraction", type=_float_list, help="comma separated initial area fractions")
    p.add_argument("-j", "--jobs", type=int, default=1)
    p.add_argument("-o", "--out")

    p = sub.add_parser("oracle", help="print the closed-form Gaussian predictions")
    p.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except WarpflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out) if getattr(args, "out", None) else None
    try:
        if args.command == "run":
            return run_single(cfg, out)
        if args.command == "grid":
            return run_phase_grid(cfg, args.r0, args.theta0, args.fraction, args.jobs, out)
        print(json.dumps(_jsonable(oracle_report(cfg)), indent=2))
        return EXIT_OK
    except WarpflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
