"""Continuous-mesh sizing: optimal density d*, equidistributed local error,
predicted global error E*, regularization, and metric-plan assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import (UNIT_AREA, compose_array, decompose_array,
                     implied_metric, vertex_metric_from_elements)
from .mesh import Triangulation

ALPHA = UNIT_AREA  # unit-element area 3*sqrt(3)/4
THETA_REG = 0.1
DENSITY_CLAMP_LO = 1e-3
DENSITY_CLAMP_HI = 1e6


class SizingError(ValueError):
    pass


def abar(eta: np.ndarray, areas: np.ndarray, p: int) -> np.ndarray:
    """Local error-law coefficient: eta_K^2 / |K|^{p+2} (s = p+1)."""
    return np.asarray(eta) ** 2 / np.asarray(areas) ** (p + 2)


def _bracket(eta: np.ndarray, p: int) -> float:
    return float(np.sum(np.asarray(eta) ** (2.0 / (p + 2))))


def optimal_density(eta: np.ndarray, areas: np.ndarray, N: float, p: int,
                    domain_area: float = None) -> np.ndarray:
    """d*(x_K) = N eta_K^{2/(p+2)} / (|K| sum eta^{2/(p+2)})."""
    eta = np.asarray(eta, dtype=float)
    areas = np.asarray(areas, dtype=float)
    if len(eta) != len(areas):
        raise SizingError("indicator/area length mismatch")
    if N <= 0:
        raise SizingError("target complexity must be positive")
    S = _bracket(eta, p)
    if S == 0.0:
        if domain_area is None:
            domain_area = float(areas.sum())
        return np.full(len(eta), N / domain_area)
    return N * eta ** (2.0 / (p + 2)) / (areas * S)


def equidistributed_error(eta: np.ndarray, N: float, p: int) -> float:
    """Target local error of the optimized mesh (same for every element)."""
    S = _bracket(eta, p)
    return float(ALPHA ** (0.5 * (p + 2)) * N ** (-0.5 * (p + 2)) * S ** (0.5 * (p + 2)))


def predicted_error(eta: np.ndarray, N: float, p: int) -> float:
    """E* = (alpha/N)^{(p+1)/2} (sum eta^{2/(p+2)})^{(p+2)/2}."""
    S = _bracket(eta, p)
    return float((ALPHA / N) ** (0.5 * (p + 1)) * S ** (0.5 * (p + 2)))


def regularize(eta: np.ndarray, N: float, p: int,
               theta: float = THETA_REG) -> np.ndarray:
    """Floor indicators at theta times the equidistributed target error."""
    eta = np.asarray(eta, dtype=float)
    floor = theta * equidistributed_error(eta, N, p)
    return np.maximum(eta, floor)


@dataclass
class AdaptPlan:
    density: np.ndarray  # d* per element
    beta: np.ndarray
    phi: np.ndarray
    tensors: np.ndarray  # (ne, 3) element target metrics
    vertex_tensors: np.ndarray  # (nv, 3) for export/interpolation
    predicted: float  # E*
    complexity: float  # sum d* |K|


def build_plan(mesh: Triangulation, eta: np.ndarray, beta_M: np.ndarray,
               phi_M: np.ndarray, N: float, p: int,
               regularized: bool = False, step_density: float = 16.0,
               step_coarsen: float = 2.0,
               step_aspect: float = 4.0) -> AdaptPlan:
    """Assemble the target metric.  step_density/step_coarsen/step_aspect
    bound the per-cycle change of each element's density and aspect ratio
    relative to its implied metric (a trust region that keeps single
    remeshing steps from overshooting).  Coarsening is limited harder than
    refinement: near-equilibrated layers are extremely sensitive to losing
    resolution, while over-refinement is merely wasteful.  Pass None to
    disable either bound."""
    eta = np.asarray(eta, dtype=float)
    beta_M = np.asarray(beta_M, dtype=float)
    phi_M = np.asarray(phi_M, dtype=float)
    if not (len(eta) == len(beta_M) == len(phi_M) == mesh.n_triangles):
        raise SizingError("per-element arrays misaligned with the mesh")
    if regularized:
        eta = regularize(eta, N, p)
    areas = mesh.areas
    omega = float(areas.sum())
    d = optimal_density(eta, areas, N, p, domain_area=omega)
    d = np.clip(d, DENSITY_CLAMP_LO * N / omega, DENSITY_CLAMP_HI * N / omega)
    d *= N / float(np.sum(d * areas))  # restore the complexity budget
    if step_density is not None or step_aspect is not None:
        im = implied_metric(mesh.vertices[mesh.triangles])
        d_imp, b_imp, _ = decompose_array(im)
        if step_density is not None or step_coarsen is not None:
            lo = d_imp / step_coarsen if step_coarsen is not None else 0.0
            hi = d_imp * step_density if step_density is not None else np.inf
            d = np.clip(d, lo, hi)
            d *= N / float(np.sum(d * areas))
        if step_aspect is not None:
            beta_M = np.clip(beta_M, np.maximum(b_imp / step_aspect, 1.0),
                             b_imp * step_aspect)
    tensors = compose_array(d, beta_M, phi_M)
    vertex = vertex_metric_from_elements(mesh, tensors)
    return AdaptPlan(density=d, beta=np.asarray(beta_M), phi=np.asarray(phi_M),
                     tensors=tensors, vertex_tensors=vertex,
                     predicted=predicted_error(eta, N, p),
                     complexity=float(np.sum(d * areas)))
