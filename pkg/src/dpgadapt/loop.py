"""Adaptive solve–estimate–mark–remesh driver and study records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .anisotropy import element_anisotropy
from .cases import TestCase
from .goal import (dwr_estimate, evaluate_target, goal_indicator,
                   patch_reconstruct, solve_dual)
from .metric import (UNIT_AREA, MetricField, implied_metric, metric_exp,
                     metric_log, vertex_metric_from_elements)
from .remesh import RemeshConfig, remesh
from .sizing import build_plan, predicted_error
from .solve import SpaceSpec, condition_estimate, l2_error, solve

COLUMNS = ["cycle", "ne", "ndof", "l2_u", "l2_sigma", "energy", "e_star",
           "j_err", "dwr", "h_min", "cond"]


@dataclass
class StudyRecord:
    case: str
    p: int
    mode: str
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)


def rate_fit(record: StudyRecord, column: str, window: int = 5):
    """Least-squares slope of log10(err) vs log10(sqrt(ndof)) over the last
    `window` cycles. Returns (slope, intercept)."""
    ndof = record.column("ndof")[-window:]
    err = record.column(column)[-window:]
    mask = err > 0
    x = 0.5 * np.log10(ndof[mask])
    y = np.log10(err[mask])
    return tuple(np.polyfit(x, y, 1))


def grading_fit(mesh, corner=(0.0, 0.0), r_min: float = 1e-6):
    """Fit sqrt(|K|) ~ C * r^s against centroid distance r from `corner`;
    returns the grading exponent s."""
    r = np.hypot(mesh.centroids[:, 0] - corner[0],
                 mesh.centroids[:, 1] - corner[1])
    mask = r > r_min
    x = np.log(r[mask])
    y = 0.5 * np.log(mesh.areas[mask])
    return float(np.polyfit(x, y, 1)[0])


def adapt_loop(case: TestCase, space: SpaceSpec, cycles: int = 10,
               n0: float = 32.0, growth: float = 1.3, mode: str = "solution",
               regularize: bool = False, solver: str = "normal",
               remesh_config: RemeshConfig = None,
               estimate_condition: bool = False,
               keep_meshes: bool = False,
               blend: float = 0.6) -> StudyRecord:
    """Run an adaptive loop: solve, estimate, build an optimized metric, and
    remesh, growing the target complexity by `growth` each cycle.

    blend relaxes each requested metric toward the current mesh's implied
    metric (log-Euclidean interpolation); 1.0 disables it.  Relaxation damps
    the remesh-to-remesh oscillation that otherwise destroys sharp layers
    once the loop reaches its resolution floor."""
    if mode == "goal" and case.target is None:
        raise ValueError(f"case {case.name!r} has no target functional")
    mesh = case.initial_mesh(int(round(n0)))
    config = remesh_config or RemeshConfig()
    record = StudyRecord(case=case.name, p=space.p, mode=mode)
    scale = 1.0
    if keep_meshes:
        record.meshes = []
        record.solutions = []
    for cycle in range(cycles):
        sol = solve(mesh, case.problem, space, method=solver)
        eta = sol.err_rep.eta
        row = {"cycle": cycle, "ne": mesh.n_triangles, "ndof": sol.ndof,
               "l2_u": math.nan, "l2_sigma": math.nan,
               "energy": sol.energy_error, "e_star": math.nan,
               "j_err": math.nan, "dwr": math.nan,
               "h_min": mesh.h_min(), "cond": math.nan}
        if case.exact_u is not None:
            row["l2_u"] = l2_error(sol, case.exact_u, comp=2)
        if case.exact_sigma is not None:
            ex = case.exact_sigma
            row["l2_sigma"] = math.hypot(
                l2_error(sol, lambda x: ex(x)[:, 0], comp=0),
                l2_error(sol, lambda x: ex(x)[:, 1], comp=1))
        sizing_eta = eta
        if mode == "goal":
            dual = solve_dual(sol, case.target)
            jh = evaluate_target(sol, case.target)
            if case.exact_J is not None:
                row["j_err"] = abs(case.exact_J - jh)
            recon = patch_reconstruct(sol, dual)
            row["dwr"] = dwr_estimate(sol, recon)
            sizing_eta = goal_indicator(sol, dual)
        if estimate_condition:
            row["cond"] = condition_estimate(sol.system, solver)[0]
        n_target = n0 * growth**cycle
        row["e_star"] = predicted_error(sizing_eta, n_target, space.p)
        record.rows.append(row)
        if keep_meshes:
            record.meshes.append(mesh)
            record.solutions.append(sol)
        if cycle == cycles - 1:
            break
        aniso = element_anisotropy(sol)
        plan = build_plan(mesh, sizing_eta, aniso.beta, aniso.phi,
                          n0 * growth ** (cycle + 1) * scale, space.p,
                          regularized=regularize)
        tensors = plan.vertex_tensors
        if blend < 1.0:
            implied = vertex_metric_from_elements(
                mesh, implied_metric(mesh.vertices[mesh.triangles]))
            tensors = metric_exp(blend * metric_log(tensors)
                                 + (1.0 - blend) * metric_log(implied))
        mesh = remesh(mesh, MetricField(mesh, tensors), config)
        # delivery feedback: inflate the requested complexity when the
        # remesher systematically under-delivers elements
        ideal_ne = n0 * growth ** (cycle + 1) / UNIT_AREA
        scale = float(np.clip(scale * ideal_ne / mesh.n_triangles, 1.0, 2.0))
    return record
