"""Goal-oriented machinery: DPG* dual solve, explicit dual estimator,
patch-wise dual reconstruction, and the dual-weighted residual."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polys import monomial_exponents
from .quadrature import edge_rule, triangle_rule
from .solve import Solution


class GoalError(RuntimeError):
    pass


@dataclass(frozen=True)
class TargetFunctional:
    """J(u) = (j_omega, u) for volume_weighted, or a weighted normal-flux
    integral over tagged boundary segments for boundary_flux."""

    kind: str
    j_volume: object = None  # callable (npts,2)->(npts,)
    j_boundary: dict = None  # tag -> weight
    quad_degree: int = 24  # evaluation rule for peaked volume weights

    def __post_init__(self):
        if self.kind not in ("volume_weighted", "boundary_flux"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if (self.kind == "volume_weighted") != (self.j_volume is not None):
            raise ValueError("volume_weighted requires j_volume and vice versa")
        if (self.kind == "boundary_flux") != (self.j_boundary is not None):
            raise ValueError("boundary_flux requires j_boundary and vice versa")


def _volume_points(mesh, ref_pts):
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    return v[:, 0][:, None, :] + np.einsum("eij,qj->eqi", J, ref_pts)


def dual_rhs(sol: Solution, target: TargetFunctional) -> np.ndarray:
    """J evaluated on every trial basis function."""
    ls = sol.system.ls
    mesh, sd, layout = sol.mesh, ls.sd, ls.layout
    rhs = np.zeros(layout.n_total)
    n = sd.n
    if target.kind == "volume_weighted":
        pts, w = triangle_rule(target.quad_degree)
        phi = sd.rb_trial.values(pts)
        xy = _volume_points(mesh, pts)
        j = target.j_volume(xy.reshape(-1, 2)).reshape(mesh.n_triangles, -1)
        vals = np.sqrt(2.0 * mesh.areas)[:, None] * np.einsum(
            "q,eq,qn->en", w, j, phi)
        idx = (3 * n) * np.arange(mesh.n_triangles)[:, None] + 2 * n + np.arange(n)
        rhs[idx.ravel()] = vals.ravel()
        return rhs
    # boundary flux: J(u) = sum_e weight int_e sigma_n ds with outward normal;
    # the flux dof on a boundary edge stores sigma.n_e, so only the constant
    # mode contributes: int_e phi_0 ds = sqrt(h_e).
    for e in mesh.boundary_edges:
        wgt = target.j_boundary.get(int(mesh.edge_tag[e]), 0.0)
        if wgt == 0.0:
            continue
        k = int(mesh.edge_tris[e, 0])
        j = int(np.nonzero(mesh.tri_edges[k] == e)[0][0])
        sgn = float(mesh.tri_edge_sign[k, j])
        rhs[layout.sig_offset[e]] = wgt * sgn * np.sqrt(mesh.edge_length[e])
    return rhs


def evaluate_target(sol: Solution, target: TargetFunctional) -> float:
    """J(u_h) = dual rhs dotted with the primal coefficients."""
    return float(dual_rhs(sol, target) @ sol.x)


@dataclass
class DualSolution:
    xi: np.ndarray  # trial-space coefficients
    z: np.ndarray  # (ne, 3m) enriched test coefficients of (tau, v)
    target: TargetFunctional


def solve_dual(sol: Solution, target: TargetFunctional) -> DualSolution:
    system = sol.system
    rhs = dual_rhs(sol, target)[: system.ndof]
    xi = system.lu().solve(rhs)
    if not np.all(np.isfinite(xi)):
        raise GoalError("dual solve produced non-finite values")
    ls = system.ls
    bxi = np.einsum("erc,ec->er", ls.B, ls.gather(xi))
    L = ls.cholesky()
    half = np.linalg.solve(L, bxi[:, :, None])
    z = np.linalg.solve(np.swapaxes(L, 1, 2), half)[:, :, 0]
    return DualSolution(xi=xi, z=z, target=target)


def _edge_trace_values(sol: Solution, coeffs: np.ndarray):
    """Per element and local edge: (tau_x, tau_y, v) at canonical edge points.

    coeffs: (ne, 3m). Returns (ne, 3, ng, 3) ordered (txy..., v) last axis.
    """
    ls = sol.system.ls
    sd, mesh = ls.sd, sol.mesh
    m = sd.m
    sq = np.sqrt(2.0 * mesh.areas)
    out = np.empty((mesh.n_triangles, 3, len(sd.edge_t), 3))
    for j in range(3):
        E = mesh.tri_edges[:, j]
        lo = mesh.edges[E, 0]
        orient = (mesh.triangles[:, (j + 1) % 3] != lo).astype(np.int64)
        phi = sd.phi_test_edge[j][orient] / sq[:, None, None]  # (ne, ng, m)
        for c in range(3):
            out[:, j, :, c] = np.einsum(
                "egm,em->eg", phi, coeffs[:, c * m:(c + 1) * m])
    return out


def eta_star_element(sol: Solution, dual: DualSolution) -> np.ndarray:
    """Explicit residual estimator for the dual pair (tau, v):
    ||L*(v,tau) - data||^2_K + sum_e h_e ||[tau.n]||^2 + h_e^-1 ||[v]||^2."""
    ls = sol.system.ls
    sd, mesh, prob = ls.sd, sol.mesh, sol.problem
    ne, m = mesh.n_triangles, sd.m
    eps = prob.epsilon
    bx, by = prob.beta
    w, pts = sd.vol_w, sd.vol_pts
    sq = np.sqrt(2.0 * mesh.areas)
    _, _, detJ, invJT = _geometry(mesh)
    coeffs = dual.z.reshape(ne, 3, m)
    vals = np.einsum("qm,ecm->ecq", sd.phi_test, coeffs) / sq[:, None, None]
    dref = np.einsum("aqm,ecm->ecaq", sd.dphi_test, coeffs) / sq[:, None, None, None]
    dphys = np.einsum("eab,ecbq->ecaq", invJT, dref)  # physical gradients
    # adjoint residual components
    r1x = vals[:, 0] / eps + dphys[:, 2, 0]  # tau_x/eps + dv/dx
    r1y = vals[:, 1] / eps + dphys[:, 2, 1]
    r2 = dphys[:, 0, 0] + dphys[:, 1, 1] - bx * dphys[:, 2, 0] - by * dphys[:, 2, 1]
    if dual.target.kind == "volume_weighted":
        xy = _volume_points(mesh, pts)
        r2 = r2 - dual.target.j_volume(xy.reshape(-1, 2)).reshape(ne, -1)
    eta2 = 2.0 * mesh.areas * ((r1x**2 + r1y**2 + r2**2) @ w)

    # edge jumps
    tr = _edge_trace_values(sol, dual.z)  # (ne, 3, ng, 3)
    tw = sd.edge_w
    for j in range(3):
        E = mesh.tri_edges[:, j]
        he = mesh.edge_length[E]
        nrm = mesh.edge_normal[E]
        interior = mesh.edge_counts[E] == 2
        tn = tr[:, j, :, 0] * nrm[:, 0:1] + tr[:, j, :, 1] * nrm[:, 1:2]
        v = tr[:, j, :, 2]
        # other-side traces aligned on the canonical parameterization
        tn_jump = np.array(tn)
        v_jump = np.array(v)
        for e_idx in np.nonzero(interior)[0]:
            E_id = E[e_idx]
            k2 = [t for t in mesh.edge_tris[E_id] if t != e_idx]
            k2 = k2[0] if k2 else e_idx  # self-neighbor on degenerate input
            j2 = int(np.nonzero(mesh.tri_edges[k2] == E_id)[0][0])
            tn_jump[e_idx] -= (tr[k2, j2, :, 0] * nrm[e_idx, 0]
                               + tr[k2, j2, :, 1] * nrm[e_idx, 1])
            v_jump[e_idx] -= tr[k2, j2, :, 2]
        bnd = ~interior
        if np.any(bnd):
            # dual Dirichlet data enters the single-sided v trace
            if dual.target.kind == "boundary_flux":
                wgt = np.array([dual.target.j_boundary.get(int(t), 0.0)
                                for t in mesh.edge_tag[E[bnd]]])
                v_jump[bnd] -= wgt[:, None]
            tn_jump[bnd] = 0.0  # no flux condition on the dual tau
        eta2 += he * (0.5 * he) * (tn_jump**2 @ tw)
        eta2 += (1.0 / he) * (0.5 * he) * (v_jump**2 @ tw)
    return np.sqrt(np.maximum(eta2, 0.0))


def _geometry(mesh):
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1] / detJ
    invJT[:, 0, 1] = -J[:, 1, 0] / detJ
    invJT[:, 1, 0] = -J[:, 0, 1] / detJ
    invJT[:, 1, 1] = J[:, 0, 0] / detJ
    return v, J, detJ, invJT


def _vander(pts: np.ndarray, exps: np.ndarray) -> np.ndarray:
    return pts[:, 0, None] ** exps[:, 0] * pts[:, 1, None] ** exps[:, 1]


def patch_reconstruct(sol: Solution, dual: DualSolution) -> np.ndarray:
    """Least-squares refit of the broken dual over edge-neighbor patches.

    Returns (ne, 3m): coefficients of the smoothed pair in each element's
    enriched orthonormal basis.
    """
    ls = sol.system.ls
    sd, mesh = ls.sd, sol.mesh
    ne, m = mesh.n_triangles, sd.m
    r = sd.spec.test_order
    exps = monomial_exponents(r)
    pts, w = sd.vol_pts, sd.vol_w
    xy = _volume_points(mesh, pts)  # (ne, nq, 2)
    sq = np.sqrt(2.0 * mesh.areas)
    zvals = np.einsum("qm,ecm->ecq", sd.phi_test, dual.z.reshape(ne, 3, m))
    zvals /= sq[:, None, None]  # (ne, 3, nq) sampled dual values

    # adjacency
    edge_nb = [[] for _ in range(ne)]
    for e in mesh.interior_edges:
        k1, k2 = mesh.edge_tris[e]
        edge_nb[k1].append(k2)
        edge_nb[k2].append(k1)
    vert_nb = [set() for _ in range(mesh.n_vertices)]
    for k, tri in enumerate(mesh.triangles):
        for vtx in tri:
            vert_nb[vtx].add(k)

    out = np.empty((ne, 3, m))
    hs = np.sqrt(mesh.areas)
    for k in range(ne):
        members = [k] + edge_nb[k]
        for attempt in range(2):
            if attempt == 1:
                patch = set()
                for vtx in mesh.triangles[k]:
                    patch |= vert_nb[vtx]
                members = sorted(patch)
            if not members and attempt == 1:
                raise GoalError(f"isolated element {k} cannot be reconstructed")
            loc = (np.concatenate([xy[t] for t in members])
                   - mesh.centroids[k]) / hs[k]
            V = _vander(loc, exps)
            rhsv = np.stack([np.concatenate([zvals[t, c] for t in members])
                             for c in range(3)], axis=1)
            coef, _, rank, _ = np.linalg.lstsq(V, rhsv, rcond=None)
            if rank == V.shape[1]:
                break
        # re-express on element k's orthonormal basis (exact: same degree)
        Vk = _vander((xy[k] - mesh.centroids[k]) / hs[k], exps)
        fit = Vk @ coef  # (nq, 3)
        out[k] = sq[k] * np.einsum("q,qc,qm->cm", w, fit, sd.phi_test).reshape(3, m)
    return out.reshape(ne, 3 * m)


def dwr_estimate(sol: Solution, recon: np.ndarray) -> float:
    """|sum_K (B_K x - l_K) . w_K| with w_K the reconstructed dual."""
    return float(abs(np.einsum("er,er->", sol.err_rep.residual, recon)))


def goal_indicator(sol: Solution, dual: DualSolution) -> np.ndarray:
    """Sizing indicator eta~_K = eta*_K * eta_K."""
    return eta_star_element(sol, dual) * sol.err_rep.eta
