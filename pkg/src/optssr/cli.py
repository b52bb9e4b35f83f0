"""Command line front end: ``opt-ssr run``, ``opt-ssr compare``, ``opt-ssr mesh-info``.

A run is described by a TOML file::

    [problem]
    source = "homogeneous-slope"   # or a path to a mesh file
    mesh_size = 5.0                # initial element size of the builtin mesh

    [analysis]
    scheme = "davis-b"
    alpha = 1000                   # or "auto" for continuation
    levels = 15
    marking_fraction = 0.2

    [[materials]]
    id = 0
    c = 6.0                        # kPa
    phi = 45.0                     # degrees
    psi = 15.0                     # degrees, defaults to phi
    E = 40.0                       # MPa
    nu = 0.3
    gamma_unsat = 20.0             # kN/m^3

Exit codes: 0 success, 2 search failure, 3 configuration error, 4 mesh error,
5 violated ordering of the Davis estimates.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from . import __version__
from .mesh import (Material, MeshError, TriMesh, WaterTable, build_homogeneous_slope, export_vtk,
                   import_mesh)
from .reduction import ReductionScheme, Strength
from .solver import (FosReport, SearchConfig, SearchFailure, adaptive_fos,
                     alpha_continuation, SlopeProblem)
from .tensors import Elasticity

log = logging.getLogger("optssr")

EXIT_OK, EXIT_SEARCH, EXIT_CONFIG, EXIT_MESH, EXIT_ORDER = 0, 2, 3, 4, 5
SCHEMA_VERSION = 1
ORDER_TOL = 0.01


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    source: str = "homogeneous-slope"
    mesh_size: float = 5.0
    materials: dict = field(default_factory=dict)
    scheme: ReductionScheme = ReductionScheme.ASSOCIATED
    alpha: float | str = 1000.0
    alpha_schedule: tuple = (10.0, 100.0, 1000.0)
    levels: int = 15
    marking_fraction: float = 0.2
    indicator: str = "dissipation"
    search: SearchConfig = field(default_factory=SearchConfig)
    refine_step: float = 0.02
    water: WaterTable | None = None
    output: Path = Path("opt-ssr-out")

    def load_mesh(self) -> TriMesh:
        if self.source == "homogeneous-slope":
            mesh = build_homogeneous_slope(self.mesh_size)
        else:
            try:
                mesh = import_mesh(self.source)
            except OSError as exc:
                raise MeshError(f"cannot read mesh {self.source}: {exc}") from None
        missing = sorted({int(m) for m in mesh.material} - set(self.materials))
        if missing:
            raise ConfigError(f"mesh uses material ids {missing} that are not defined")
        return mesh


def _number(table, key, default=None, positive=False):
    if key not in table:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key!r} must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{key!r} must be positive, got {value}")
    return float(value)


def _material(entry: dict) -> tuple[int, Material]:
    try:
        mid = int(entry.get("id", 0))
        phi = _number(entry, "phi")
        psi = _number(entry, "psi", phi)
        strength = Strength.from_degrees(_number(entry, "c"), phi, psi)
        # Young's modulus is given in MPa, everything else works in kPa
        el = Elasticity(_number(entry, "E") * 1000.0, _number(entry, "nu"))
        gu = _number(entry, "gamma_unsat")
        return mid, Material(strength, el, gu, _number(entry, "gamma_sat", gu))
    except ValueError as exc:
        raise ConfigError(f"material {entry.get('id', 0)}: {exc}") from None


def parse_config(text: str, base: Path | None = None) -> RunConfig:
    """Validate a TOML run description."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    cfg = RunConfig()
    problem = raw.get("problem", {})
    cfg.source = str(problem.get("source", cfg.source))
    if cfg.source != "homogeneous-slope" and base is not None:
        cfg.source = str((base / cfg.source).resolve())
    cfg.mesh_size = _number(problem, "mesh_size", cfg.mesh_size, positive=True)

    entries = raw.get("materials")
    if not entries:
        raise ConfigError("at least one [[materials]] entry is required")
    for entry in entries:
        mid, mat = _material(entry)
        if mid in cfg.materials:
            raise ConfigError(f"material id {mid} defined twice")
        cfg.materials[mid] = mat

    an = raw.get("analysis", {})
    try:
        cfg.scheme = ReductionScheme.parse(an.get("scheme", "associated"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    alpha = an.get("alpha", 1000.0)
    if alpha == "auto":
        cfg.alpha = "auto"
    else:
        cfg.alpha = _number(an, "alpha", positive=True)
    schedule = an.get("alpha_schedule", list(cfg.alpha_schedule))
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or any(a <= 0 for a in schedule):
        raise ConfigError("alpha_schedule must be positive and increasing")
    cfg.alpha_schedule = tuple(float(a) for a in schedule)
    levels = an.get("levels", cfg.levels)
    if not isinstance(levels, int) or levels < 1:
        raise ConfigError(f"levels must be a positive integer, got {levels!r}")
    cfg.levels = levels
    cfg.marking_fraction = _number(an, "marking_fraction", cfg.marking_fraction, positive=True)
    if cfg.marking_fraction > 1.0:
        raise ConfigError("marking_fraction must lie in (0, 1]")
    cfg.indicator = str(an.get("indicator", cfg.indicator))
    if cfg.indicator not in ("dissipation", "deviatoric"):
        raise ConfigError(f"unknown indicator {cfg.indicator!r}")
    window = an.get("lambda_window", list(cfg.search.window))
    if len(window) != 2 or not 0 < window[0] < window[1]:
        raise ConfigError(f"lambda_window must be [low, high] with 0 < low < high, got {window}")
    cfg.search = SearchConfig(lambda_start=_number(an, "lambda_start", 0.5, positive=True),
                              step=_number(an, "lambda_step", 0.1, positive=True),
                              tol=_number(an, "lambda_tol", 1e-3, positive=True),
                              window=(float(window[0]), float(window[1])))
    cfg.refine_step = _number(an, "refine_step", cfg.refine_step, positive=True)

    if "water" in raw:
        w = raw["water"]
        try:
            cfg.water = WaterTable(w["points"], _number(w, "gamma_w", 9.81))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"water table: {exc}") from None
        if cfg.water.gamma_w < 0:
            raise ConfigError("gamma_w must be non-negative")

    out = raw.get("output", {})
    cfg.output = Path(out.get("directory", str(cfg.output)))
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, path.parent)


# --- orchestration -----------------------------------------------------------

def _resolve_alpha(cfg: RunConfig, mesh: TriMesh) -> float:
    if cfg.alpha != "auto":
        return float(cfg.alpha)
    problem = SlopeProblem(mesh, cfg.materials, cfg.water)
    chosen, results = alpha_continuation(problem, cfg.scheme, cfg.alpha_schedule, cfg.search)
    for a, r in results:
        log.info("continuation alpha=%g lambda*=%.4f omega*=%.4f", a, r.lambda_star, r.omega_star)
    return chosen


def execute(cfg: RunConfig, scheme=None, trajectory=None) -> FosReport:
    scheme = cfg.scheme if scheme is None else ReductionScheme.parse(scheme)
    mesh = cfg.load_mesh() if trajectory is None else trajectory[0]
    alpha = _resolve_alpha(cfg, mesh)
    return adaptive_fos(mesh, cfg.materials, scheme, cfg.levels, alpha, cfg.water, cfg.search,
                        cfg.marking_fraction, cfg.indicator, cfg.refine_step,
                        trajectory=trajectory)


def summary_dict(report: FosReport) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "scheme": report.scheme,
        "alpha": report.alpha,
        "fos": report.fos,
        "levels": [{"level": r.level, "elements": r.elements, "lambda_star": r.lambda_star,
                    "omega_star": r.omega_star, "g_alpha": r.g_alpha, "solves": r.solves,
                    "newton_iterations": r.newton_iterations} for r in report.levels],
        "timing": {"total_seconds": report.seconds,
                   "level_seconds": [r.seconds for r in report.levels]},
    }


def write_convergence(report: FosReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "lambda", "alpha", "iter", "residual", "J", "accepted_step"])
        for row in report.convergence:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def write_outputs(report: FosReport, out: Path, prefix: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{prefix}summary.json").write_text(json.dumps(summary_dict(report), indent=2) + "\n")
    write_convergence(report, out / f"{prefix}convergence.csv")
    for k, (mesh, v, fail) in enumerate(zip(report.meshes, report.velocities,
                                            report.failure_fields), start=1):
        export_vtk(mesh, {"failure": fail, "velocity": v.reshape(-1, 2)},
                   out / f"{prefix}failure_L{k}.vtk")


def ordering_violations(fos: dict, tol: float = ORDER_TOL) -> list[str]:
    """Check the A/B/C chain is monotone on one side of one, and below associated."""
    a, b, c = fos["davis-a"], fos["davis-b"], fos["davis-c"]
    up = 1.0 - tol <= a <= b + tol and b <= c + tol
    down = 1.0 + tol >= a >= b - tol and b >= c - tol
    problems = []
    if not (up or down):
        problems.append(f"Davis estimates not ordered: A={a:.4f} B={b:.4f} C={c:.4f}")
    if "associated" in fos and c > fos["associated"] + tol:
        problems.append(f"Davis C estimate {c:.4f} exceeds associated {fos['associated']:.4f}")
    return problems


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    t0 = time.perf_counter()
    report = execute(cfg)
    write_outputs(report, cfg.output)
    print(f"{report.scheme}: FoS = {report.fos:.4f} ({len(report.levels)} levels, "
          f"{report.final_mesh.n_elements} elements, {time.perf_counter() - t0:.1f} s)")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    base = execute(cfg, ReductionScheme.ASSOCIATED)
    reports = {"associated": base}
    for scheme in (ReductionScheme.DAVIS_A, ReductionScheme.DAVIS_B, ReductionScheme.DAVIS_C):
        reports[scheme.value] = execute(cfg, scheme, trajectory=base.meshes)
    cfg.output.mkdir(parents=True, exist_ok=True)
    psi = sorted({round(math.degrees(m.strength.psi), 6) for m in cfg.materials.values()})
    with open(cfg.output / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["approach", "psi_deg", "fos", "elements"])
        for name, rep in reports.items():
            w.writerow([name, ";".join(f"{p:g}" for p in psi), f"{rep.fos:.6f}",
                        rep.final_mesh.n_elements])
    for name, rep in reports.items():
        write_outputs(rep, cfg.output, prefix=f"{name}_")
        print(f"{name:>10}: FoS = {rep.fos:.4f}")
    problems = ordering_violations({k: r.fos for k, r in reports.items()})
    for p in problems:
        print(f"ordering violation: {p}", file=sys.stderr)
    return EXIT_ORDER if problems else EXIT_OK


def cmd_mesh_info(args) -> int:
    if args.mesh == "homogeneous-slope":
        mesh = build_homogeneous_slope()
    else:
        try:
            mesh = import_mesh(args.mesh)
        except OSError as exc:
            raise MeshError(f"cannot read mesh {args.mesh}: {exc}") from None
    info = mesh.summary()
    info["conforming"] = mesh.edge_hash_audit()
    print(json.dumps(info, indent=2))
    return EXIT_OK


def _apply_overrides(cfg: RunConfig, args) -> None:
    if getattr(args, "levels", None) is not None:
        if args.levels < 1:
            raise ConfigError("--levels must be positive")
        cfg.levels = args.levels
    if getattr(args, "alpha", None) is not None:
        if args.alpha == "auto":
            cfg.alpha = "auto"
        else:
            try:
                cfg.alpha = float(args.alpha)
            except ValueError:
                raise ConfigError(f"--alpha must be a number or 'auto', got {args.alpha!r}") from None
            if not cfg.alpha > 0:
                raise ConfigError("--alpha must be positive")
    if getattr(args, "scheme", None) is not None:
        try:
            cfg.scheme = ReductionScheme.parse(args.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if getattr(args, "out", None) is not None:
        cfg.output = Path(args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opt-ssr", description="Slope factor of safety by "
                                     "optimised shear strength reduction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, helptext in (("run", cmd_run, "factor of safety for one scheme"),
                                 ("compare", cmd_compare, "associated and Davis A/B/C side by side")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--levels", type=int)
        p.add_argument("--alpha")
        p.add_argument("--scheme")
        p.add_argument("--out")
        p.set_defaults(func=func)
    p = sub.add_parser("mesh-info", help="summary of a mesh file (or 'homogeneous-slope')")
    p.add_argument("mesh")
    p.set_defaults(func=cmd_mesh_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{stage}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"{stage}: mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except SearchFailure as exc:
        print(f"{stage}: search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH


if __name__ == "__main__":
    sys.exit(main())
