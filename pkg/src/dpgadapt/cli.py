"""Command-line interface: solve / adapt / study / remesh subcommands."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import reports
from .anisotropy import element_anisotropy
from .cases import REGISTRY, make_case
from .loop import StudyRecord, adapt_loop
from .mesh import MeshError, read_mesh, write_mesh
from .metric import MetricField, MetricError
from .remesh import RemeshConfig, RemeshError, remesh
from .sizing import build_plan
from .solve import SolveError, SpaceSpec, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_REMESH = 4


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    """Flat ASCII key-value file: one `key = value` per line, `#` comments."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    return out


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpgadapt",
        description="Anisotropic goal-oriented DPG adaptation for 2D "
                    "convection-diffusion problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--case", choices=sorted(REGISTRY))
        sp.add_argument("--p", type=int, help="trial polynomial order")
        sp.add_argument("--dp", type=int, help="test-space enrichment")
        sp.add_argument("--norm", choices=["standard_V", "scaled_V"])
        sp.add_argument("--cycles", type=int)
        sp.add_argument("--n0", type=float, help="initial/target complexity")
        sp.add_argument("--growth", type=float)
        sp.add_argument("--mode", choices=["solution", "goal"])
        sp.add_argument("--regularize", help="true/false")
        sp.add_argument("--solver", choices=["normal", "dls"])
        sp.add_argument("--remesher", choices=["builtin", "external"])
        sp.add_argument("--out", help="output path (directory or file)")

    for name in ("solve", "adapt", "study", "remesh"):
        common(sub.add_parser(name))
    return parser


DEFAULTS = dict(case="boundary_layer", p=1, dp=2, norm="scaled_V", cycles=10,
                n0=32.0, growth=1.3, mode="solution", regularize=False,
                solver="normal", remesher="builtin", out="out")

_CASTS = dict(p=int, dp=int, cycles=int, n0=float, growth=float,
              regularize=_parse_bool)


def resolve_options(args) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        cfg = load_config(args.config)
        for key, value in cfg.items():
            if key not in opts:
                raise ConfigError(f"unknown config key {key!r}")
            opts[key] = _CASTS.get(key, str)(value)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = _CASTS.get(key, lambda v: v)(value) \
                if isinstance(value, str) else value
    if opts["case"] not in REGISTRY:
        raise ConfigError(f"unknown case {opts['case']!r}")
    if opts["norm"] not in ("standard_V", "scaled_V"):
        raise ConfigError(f"unknown norm {opts['norm']!r}")
    if opts["mode"] not in ("solution", "goal"):
        raise ConfigError(f"unknown mode {opts['mode']!r}")
    if opts["solver"] not in ("normal", "dls"):
        raise ConfigError(f"unknown solver {opts['solver']!r}")
    if opts["remesher"] not in ("builtin", "external"):
        raise ConfigError(f"unknown remesher {opts['remesher']!r}")
    if isinstance(opts["regularize"], str):
        opts["regularize"] = _parse_bool(opts["regularize"])
    if opts["p"] < 1 or opts["dp"] < 1 or opts["cycles"] < 1:
        raise ConfigError("p, dp, and cycles must be positive")
    if opts["n0"] <= 0 or opts["growth"] <= 0:
        raise ConfigError("n0 and growth must be positive")
    return opts


def _space(opts) -> SpaceSpec:
    return SpaceSpec(p=opts["p"], dp=opts["dp"], norm=opts["norm"])


def _remesh_config(opts) -> RemeshConfig:
    return RemeshConfig(max_passes=50, out_of_band_frac=0.005,
                        backend=opts["remesher"])


def cmd_solve(opts) -> int:
    case = make_case(opts["case"])
    mesh = case.initial_mesh(int(round(opts["n0"])))
    sol = solve(mesh, case.problem, _space(opts), method=opts["solver"])
    os.makedirs(opts["out"], exist_ok=True)
    point, cell = reports.solution_fields(sol)
    reports.write_vtk(os.path.join(opts["out"], "solution.vtk"), mesh,
                      point, cell, title=f"{case.name} p={opts['p']}")
    write_mesh(mesh, os.path.join(opts["out"], "mesh.mesh"))
    print(f"case {case.name}: ne {mesh.n_triangles} ndof {sol.ndof} "
          f"energy-error {sol.energy_error:.6e}")
    return EXIT_OK


def _run_adapt(opts, p=None) -> StudyRecord:
    case = make_case(opts["case"])
    return adapt_loop(case, _space(opts if p is None else {**opts, "p": p}),
                      cycles=opts["cycles"], n0=opts["n0"],
                      growth=opts["growth"], mode=opts["mode"],
                      regularize=opts["regularize"], solver=opts["solver"],
                      remesh_config=_remesh_config(opts), keep_meshes=True)


def cmd_adapt(opts) -> int:
    record = _run_adapt(opts)
    os.makedirs(opts["out"], exist_ok=True)
    reports.write_csv(record, os.path.join(opts["out"], "study.csv"))
    mesh = record.meshes[-1]
    sol = record.solutions[-1]
    point, cell = reports.solution_fields(sol)
    reports.write_vtk(os.path.join(opts["out"], "final.vtk"), mesh,
                      point, cell, title=f"{record.case} p={record.p}")
    write_mesh(mesh, os.path.join(opts["out"], "final.mesh"))
    last = record.rows[-1]
    print(f"case {record.case}: {len(record.rows)} cycles, final ne "
          f"{last['ne']} energy-error {last['energy']:.6e}")
    return EXIT_OK


def cmd_study(opts) -> int:
    os.makedirs(opts["out"], exist_ok=True)
    for p in (1, 2, 3):
        record = _run_adapt(opts, p=p)
        reports.write_csv(record,
                          os.path.join(opts["out"], f"study_p{p}.csv"))
        last = record.rows[-1]
        print(f"p={p}: final ne {last['ne']} "
              f"energy-error {last['energy']:.6e}")
    return EXIT_OK


def cmd_remesh(opts) -> int:
    case = make_case(opts["case"])
    mesh = case.initial_mesh(int(round(opts["n0"])))
    try:
        sol = solve(mesh, case.problem, _space(opts), method=opts["solver"])
    except SolveError:
        raise
    aniso = element_anisotropy(sol)
    plan = build_plan(mesh, sol.err_rep.eta, aniso.beta, aniso.phi,
                      opts["n0"] * opts["growth"], opts["p"],
                      regularized=opts["regularize"])
    new = remesh(mesh, MetricField(mesh, plan.vertex_tensors),
                 _remesh_config(opts))
    os.makedirs(opts["out"], exist_ok=True)
    write_mesh(new, os.path.join(opts["out"], "remeshed.mesh"))
    print(f"remeshed {mesh.n_triangles} -> {new.n_triangles} elements")
    return EXIT_OK


COMMANDS = dict(solve=cmd_solve, adapt=cmd_adapt, study=cmd_study,
                remesh=cmd_remesh)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](opts)
    except (RemeshError, MeshError, MetricError) as exc:
        print(f"remesh error: {exc}", file=sys.stderr)
        return EXIT_REMESH
    except (SolveError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
