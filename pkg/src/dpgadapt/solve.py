"""Global DPG solves: normal equations, discrete least squares, error
representation, and condition estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import LocalSystems, ProblemSpec, SpaceSpec, build_local_systems
from .mesh import Triangulation


class SolveError(RuntimeError):
    pass


@dataclass
class GlobalSystem:
    A: sp.csc_matrix  # normal matrix B^T G^-1 B
    b: np.ndarray
    ls: LocalSystems
    Bt: sp.csr_matrix  # whitened least-squares matrix L^-1 B (global rows)
    lt: np.ndarray  # whitened load
    _lu: object = None

    @property
    def ndof(self) -> int:
        return self.ls.layout.n_total

    def lu(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.A)
            except RuntimeError as exc:
                raise SolveError(f"normal-equation factorization failed: {exc}") from exc
        return self._lu


def _whiten(ls: LocalSystems):
    """Per-element L_K^-1 B_K and L_K^-1 l_K with G_K = L_K L_K^T."""
    L = ls.cholesky()
    Bt = np.linalg.solve(L, ls.B)
    lt = np.linalg.solve(L, ls.load[:, :, None])[:, :, 0]
    return Bt, lt


def assemble_normal(ls: LocalSystems) -> GlobalSystem:
    Btil, ltil = _whiten(ls)
    ne, nrow, ncol = Btil.shape
    N = ls.layout.n_total
    Ae = np.einsum("erc,erd->ecd", Btil, Btil)
    be = np.einsum("erc,er->ec", Btil, ltil)
    rows = np.repeat(ls.col_map, ncol, axis=1).ravel()
    cols = np.tile(ls.col_map, (1, ncol)).ravel()
    # one padding dof absorbs dropped boundary-lambda columns
    A = sp.coo_matrix((Ae.ravel(), (rows, cols)), shape=(N + 1, N + 1)).tocsc()
    A = A[:N, :N]
    b = np.zeros(N + 1)
    np.add.at(b, ls.col_map.ravel(), be.ravel())
    grows = (np.arange(ne)[:, None, None] * nrow
             + np.arange(nrow)[None, :, None]) + np.zeros((1, 1, ncol), dtype=np.int64)
    gcols = np.broadcast_to(ls.col_map[:, None, :], Btil.shape)
    Bg = sp.coo_matrix(
        (Btil.ravel(), (grows.ravel(), gcols.ravel())),
        shape=(ne * nrow, N + 1)).tocsc()[:, :N].tocsr()
    return GlobalSystem(A=A, b=b[:N], ls=ls, Bt=Bg, lt=ltil.ravel())


def solve_primal(system: GlobalSystem, method: str = "normal") -> np.ndarray:
    if method == "normal":
        x = system.lu().solve(system.b)
        if not np.all(np.isfinite(x)):
            raise SolveError("normal-equation solve produced non-finite values")
        return x
    if method == "dls":
        res = spla.lsqr(system.Bt, system.lt, atol=1e-12, btol=1e-12,
                        iter_lim=20 * system.ndof)
        x, istop = res[0], res[1]
        if istop not in (1, 2):
            raise SolveError(f"LSQR did not converge (istop={istop})")
        return x
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ErrorRepresentation:
    y: np.ndarray  # (ne, 3m) enriched test coefficients per element
    eta: np.ndarray  # (ne,) local energy values
    residual: np.ndarray  # (ne, 3m) B_K x - l_K

    @property
    def total(self) -> float:
        return float(np.sqrt(np.sum(self.eta**2)))


def error_representation(system: GlobalSystem, x: np.ndarray) -> ErrorRepresentation:
    ls = system.ls
    xloc = ls.gather(x)
    resid = np.einsum("erc,ec->er", ls.B, xloc) - ls.load
    L = ls.cholesky()
    half = np.linalg.solve(L, resid[:, :, None])
    y = np.linalg.solve(np.swapaxes(L, 1, 2), half)[:, :, 0]
    eta_sq = np.maximum(np.einsum("er,er->e", resid, y), 0.0)
    return ErrorRepresentation(y=y, eta=np.sqrt(eta_sq), residual=resid)


def condition_estimate(system: GlobalSystem, method: str = "normal",
                       iterations: int = 50, seed: int = 0):
    """Power/inverse-power estimate of the 2-norm condition number.

    For the least-squares matrix the singular values are the square roots of
    the normal matrix's eigenvalues, so its condition is sqrt of normal's.
    """
    A = system.A
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        w = A @ v
        lam_max = np.linalg.norm(w)
        v = w / lam_max
    lu = system.lu()
    u = rng.standard_normal(A.shape[0])
    u /= np.linalg.norm(u)
    for _ in range(iterations):
        w = lu.solve(u)
        inv_norm = np.linalg.norm(w)
        u = w / inv_norm
    lam_min = 1.0 / inv_norm
    cond = lam_max / lam_min
    if method == "dls":
        return float(np.sqrt(cond)), "dls-power-iteration"
    if method == "normal":
        return float(cond), "normal-power-iteration"
    raise ValueError(f"unknown method {method!r}")


@dataclass
class Solution:
    """Primal solve bundle used by estimators and the adaptation loop."""

    mesh: Triangulation
    problem: ProblemSpec
    space: SpaceSpec
    system: GlobalSystem
    x: np.ndarray
    err_rep: ErrorRepresentation

    @property
    def ndof(self) -> int:
        return self.system.ndof

    @property
    def energy_error(self) -> float:
        return self.err_rep.total

    def interior_coeffs(self, k=slice(None)):
        """(ne, 3, n) coefficients of (sigma_x, sigma_y, u) per element."""
        n = self.system.ls.sd.n
        ne = self.mesh.n_triangles
        return self.x[: 3 * n * ne].reshape(ne, 3, n)[k]


def solve(mesh: Triangulation, problem: ProblemSpec, space: SpaceSpec,
          method: str = "normal") -> Solution:
    ls = build_local_systems(mesh, problem, space)
    system = assemble_normal(ls)
    x = solve_primal(system, method)
    rep = error_representation(system, x)
    return Solution(mesh=mesh, problem=problem, space=space, system=system,
                    x=x, err_rep=rep)


def _element_points(mesh: Triangulation, ref_pts: np.ndarray) -> np.ndarray:
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    return v[:, 0][:, None, :] + np.einsum("eij,qj->eqi", J, ref_pts)


def evaluate_field(sol: Solution, comp: int, ref_pts: np.ndarray) -> np.ndarray:
    """Values of one interior trial component at reference points, per element."""
    sd = sol.system.ls.sd
    phi = sd.rb_trial.values(ref_pts)  # (nq, n)
    scale = 1.0 / np.sqrt(2.0 * sol.mesh.areas)
    coeff = sol.interior_coeffs()[:, comp, :]
    return np.einsum("en,qn->eq", coeff, phi) * scale[:, None]


def l2_error(sol: Solution, exact, comp: int = 2, degree: int = 24) -> float:
    """L2 distance between a trial component and a callable exact field."""
    from .quadrature import triangle_rule

    pts, w = triangle_rule(degree)
    sd = sol.system.ls.sd
    phi = sd.rb_trial.values(pts)
    scale = 1.0 / np.sqrt(2.0 * sol.mesh.areas)
    vals = np.einsum("en,qn->eq", sol.interior_coeffs()[:, comp, :], phi) * scale[:, None]
    xy = _element_points(sol.mesh, pts)
    ex = exact(xy.reshape(-1, 2)).reshape(vals.shape)
    err_sq = 2.0 * sol.mesh.areas * ((ex - vals) ** 2 @ w)
    return float(np.sqrt(err_sq.sum()))
