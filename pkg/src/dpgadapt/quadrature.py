"""Quadrature rules on the reference triangle and on edges.

Triangle rules are collapsed (Duffy) tensor rules built from Gauss-Legendre
and Gauss-Jacobi points, exact for polynomials of the requested total degree.
The reference triangle is {(x, y): x >= 0, y >= 0, x + y <= 1}.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 40


class UnsupportedDegreeError(ValueError):
    pass


def edge_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points/weights on [-1, 1], exact to the given degree."""
    if degree < 0 or degree > MAX_DEGREE:
        raise UnsupportedDegreeError(f"edge quadrature degree {degree} unsupported")
    n = degree // 2 + 1
    x, w = roots_legendre(n)
    return x, w


def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Points (nq, 2) and weights (nq,) on the reference triangle.

    Exact for all bivariate polynomials of total degree <= degree; weights
    sum to the reference area 1/2.
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise UnsupportedDegreeError(f"triangle quadrature degree {degree} unsupported")
    n = degree // 2 + 1
    # u-direction carries the (1 - u) Duffy Jacobian via a Jacobi weight.
    xu, wu = roots_jacobi(n, 1.0, 0.0)
    xv, wv = roots_legendre(n)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    # roots_jacobi weights integrate (1-x)^1 on [-1,1]; rescale to [0,1].
    wu = wu * 0.25
    wv = wv * 0.5
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    pts = np.column_stack([x, y])
    return pts, W.ravel()


def map_to_triangle(
    pts: np.ndarray, v0: np.ndarray, v1: np.ndarray, v2: np.ndarray
) -> np.ndarray:
    """Affinely map reference-triangle points to the physical triangle."""
    return (
        v0[..., None, :]
        + pts[:, 0, None] * (v1 - v0)[..., None, :]
        + pts[:, 1, None] * (v2 - v0)[..., None, :]
    )
