"""Per-element anisotropy: error-density polynomial, homogeneous
decomposition, directional statistics, and the ellipse-bound minimization
yielding (beta_M, phi_M)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .metric import implied_metric, metric_decompose
from .polys import (derivative_matrices, monomial_exponents, n_monomials,
                    poly_mul_batch, product_index)
from .quadrature import triangle_rule
from .solve import Solution

RHO_MAX = 1e8
BETA_MAX = 1000.0
DROP_TOL = 1e-12


@dataclass
class DensityPoly:
    """e_K for every element, in monomials of centered reference coordinates.

    Physical offsets from the centroid map through the element Jacobian:
    y = J yhat, so homogeneous parts keep their order and physical
    directional values are obtained by evaluating at J^-1 (cos, sin)."""

    coeffs: np.ndarray  # (ne, n_monomials(degree))
    degree: int
    J: np.ndarray  # (ne, 2, 2)
    areas: np.ndarray


def error_density_poly(sol: Solution, coeffs: np.ndarray = None) -> DensityPoly:
    """e_K = psi_v^2 + |psi_tau|^2 + w (|grad psi_v|^2 + (div psi_tau)^2),
    with w = 1 (standard_V) or sqrt|K| (scaled_V), by exact coefficient
    arithmetic."""
    ls = sol.system.ls
    sd, mesh = ls.sd, sol.mesh
    r = sd.spec.test_order
    m = sd.m
    if coeffs is None:
        coeffs = sol.err_rep.y
    ne = mesh.n_triangles
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1] / detJ
    invJT[:, 0, 1] = -J[:, 1, 0] / detJ
    invJT[:, 1, 0] = -J[:, 0, 1] / detJ
    invJT[:, 1, 1] = J[:, 0, 0] / detJ

    C = sd.rb_test.coeff  # (nmono_r, m)
    scale = 1.0 / np.sqrt(detJ)
    a = np.einsum("nm,ecm->ecn", C, coeffs.reshape(ne, 3, m)) * scale[:, None, None]
    dx, dy = derivative_matrices(r)
    dref = np.stack([np.einsum("pn,ecn->ecp", dx, a),
                     np.einsum("pn,ecn->ecp", dy, a)])  # (2, ne, 3, nmono)
    # physical gradients via the chain rule yhat = J^-1 y
    gphys = np.einsum("eab,becn->aecn", invJT, dref)
    gv = gphys[:, :, 2]  # (2, ne, nmono)
    div = gphys[0, :, 0] + gphys[1, :, 1]

    tab = product_index(r, r)
    nout = n_monomials(2 * r)
    w = np.sqrt(mesh.areas) if sd.spec.norm == "scaled_V" else np.ones(ne)
    e = poly_mul_batch(a[:, 2], a[:, 2], tab, nout)
    e += poly_mul_batch(a[:, 0], a[:, 0], tab, nout)
    e += poly_mul_batch(a[:, 1], a[:, 1], tab, nout)
    grad_part = poly_mul_batch(gv[0], gv[0], tab, nout)
    grad_part += poly_mul_batch(gv[1], gv[1], tab, nout)
    grad_part += poly_mul_batch(div, div, tab, nout)
    e += w[:, None] * grad_part
    return DensityPoly(coeffs=e, degree=2 * r, J=J, areas=mesh.areas)


def decompose_homogeneous(coeffs: np.ndarray, degree: int):
    """Graded monomial ordering makes each homogeneous part a contiguous
    slice; returns {order: (..., order+1) coefficient blocks}."""
    out = {}
    for d in range(degree + 1):
        off = d * (d + 1) // 2
        out[d] = coeffs[..., off:off + d + 1]
    return out


def _eval_homogeneous(block: np.ndarray, order: int, u: np.ndarray) -> np.ndarray:
    """P_i at directions u; block (..., i+1) graded x-power-descending."""
    ix = np.arange(order, -1, -1)
    mono = u[..., 0:1] ** ix * u[..., 1:2] ** (order - ix)
    return np.einsum("...l,...l->...", block, mono)


def direction_stats(block: np.ndarray, order: int, J: np.ndarray = None,
                    n_scan: int = 720, rho_max: float = RHO_MAX):
    """(A_i, A_i_perp, rho_i, phi_i) per element for one homogeneous order.

    block: (ne, order+1) coefficients in reference offsets; J maps physical
    angles to reference directions (identity if None).
    """
    block = np.atleast_2d(block)
    ne = block.shape[0]
    phis = np.linspace(0.0, np.pi, n_scan, endpoint=False)
    dirs = np.stack([np.cos(phis), np.sin(phis)], axis=-1)  # (ns, 2)
    if J is None:
        u = np.broadcast_to(dirs, (ne, n_scan, 2))
    else:
        invJ = np.linalg.inv(J)
        u = np.einsum("eab,sb->esa", invJ, dirs)
    vals = np.abs(_eval_homogeneous(block[:, None, :], order, u))  # (ne, ns)
    kbest = np.argmax(vals, axis=1)

    def f(phi):
        d = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        if J is not None:
            d = np.einsum("eab,eb->ea", invJ, d)
        return -np.abs(_eval_homogeneous(block, order, d))

    h = np.pi / n_scan
    phi = _golden_scalar_batch(f, phis[kbest] - h, phis[kbest] + h)
    A = -f(phi)
    phi = np.mod(phi, np.pi)
    A_perp = -f(phi - 0.5 * np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(A_perp > 0, A / np.maximum(A_perp, 1e-300), rho_max)
    rho = np.clip(rho, 1.0, rho_max)
    rho = np.where(A > 0, rho, 1.0)
    return A, A_perp, rho, phi


def _golden_scalar_batch(f, a, b, tol=1e-10, iters=80):
    gold = 0.5 * (np.sqrt(5.0) - 1.0)
    for _ in range(iters):
        if np.all(b - a < tol):
            break
        x1 = b - gold * (b - a)
        x2 = a + gold * (b - a)
        take = f(x1) > f(x2)
        a = np.where(take, x1, a)
        b = np.where(take, b, x2)
    return 0.5 * (a + b)


def bound_quadform(A: float, rho: float, phi: float, order: int,
                   x: np.ndarray) -> np.ndarray:
    """Lemma bound A_i (x^T Q diag(1, rho^{-2/i}) Q^T x)^{i/2}."""
    x = np.atleast_2d(x)
    c, s = np.cos(phi), np.sin(phi)
    xr = x[:, 0] * c + x[:, 1] * s
    xp = -x[:, 0] * s + x[:, 1] * c
    q = xr**2 + rho ** (-2.0 / order) * xp**2
    return A * q ** (0.5 * order)


@dataclass
class AnisotropyResult:
    beta: np.ndarray  # (ne,) beta_M >= 1
    phi: np.ndarray  # (ne,) phi_M in [0, pi)
    gbar: np.ndarray
    A: np.ndarray  # (ne, nc) stats actually used
    rho: np.ndarray
    phi_i: np.ndarray
    orders: np.ndarray


def element_anisotropy(sol: Solution, density: DensityPoly = None,
                       beta_max: float = BETA_MAX,
                       orders: str = "quadratic") -> AnisotropyResult:
    """Full pipeline: density -> even-order stats -> bound minimization.

    orders selects which homogeneous components drive the minimization:
    "quadratic" (default) uses only i = 2, "all" uses every even order up
    to the density degree.  On stretched elements the unit-circle
    amplitudes A_i grow like aspect^i, so with the lambda weighting the
    highest orders dominate the bound and prescribe beta ~ rho^(1/i) ~ 1,
    which collapses the anisotropy the moment the mesh starts to stretch.
    The quadratic component alone prescribes beta = sqrt(rho_2), which is
    the gradient-ratio of the error density and compounds correctly as
    layers are resolved."""
    if density is None:
        density = error_density_poly(sol)
    parts = decompose_homogeneous(density.coeffs, density.degree)
    if orders == "quadratic":
        orders = np.array([2])
    elif orders == "all":
        orders = np.array([i for i in range(2, density.degree + 1, 2)])
    else:
        orders = np.asarray(orders)
    ne = density.coeffs.shape[0]
    A = np.zeros((ne, len(orders)))
    rho = np.ones((ne, len(orders)))
    phi_i = np.zeros((ne, len(orders)))
    for j, i in enumerate(orders):
        A[:, j], _, rho[:, j], phi_i[:, j] = direction_stats(
            parts[i], i, J=density.J)
    amax = A.max(axis=1)
    A[A < DROP_TOL * amax[:, None]] = 0.0

    im = implied_metric(sol.mesh.vertices[sol.mesh.triangles])
    lam = 1.0 / np.sqrt(im[:, 0] * im[:, 2] - im[:, 1] ** 2)
    beta, phi, gbar = _kernels.anisotropy_search(
        A, rho, phi_i, orders, lam, beta_max=beta_max)
    # isotropic fallback where every component is negligible
    dead = amax <= 0.0
    beta[dead] = 1.0
    phi[dead] = 0.0
    return AnisotropyResult(beta=beta, phi=phi, gbar=gbar, A=A, rho=rho,
                            phi_i=phi_i, orders=orders)


def anisotropy_minimize(components, lam: float,
                        beta_max: float = BETA_MAX) -> tuple[float, float, float]:
    """Single-element minimization from explicit (order, A, rho, phi) stats."""
    comps = [c for c in components if c[1] > 0.0]
    if not comps:
        return 1.0, 0.0, 0.0
    orders = np.array([c[0] for c in comps])
    A = np.array([[c[1] for c in comps]])
    rho = np.array([[c[2] for c in comps]])
    phi_i = np.array([[c[3] for c in comps]])
    beta, phi, gbar = _kernels.anisotropy_search_np(
        A, rho, phi_i, orders.astype(float), np.array([lam]), beta_max=beta_max)
    return float(beta[0]), float(phi[0]), float(gbar[0])


def density_integral(density: DensityPoly) -> np.ndarray:
    """int_K e_K per element by quadrature (oracle for eta_K^2)."""
    pts, w = triangle_rule(density.degree)
    exps = monomial_exponents(density.degree)
    from .polys import monomial_values

    V = monomial_values(exps, pts)  # centered reference monomials
    vals = density.coeffs @ V.T  # (ne, nq)
    return 2.0 * density.areas * (vals @ w)
