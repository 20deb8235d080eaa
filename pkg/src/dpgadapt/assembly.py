"""Element-local DPG systems for the ultra-weak convection-diffusion form.

Trial variables per element: interior fluxes (sigma_x, sigma_y) and field u,
each in P^p(K); per edge: a scalar trace lambda (interior edges only) and a
normal flux sigma_hat (all edges), each in P^p(e).  Test pairs (tau, v) live
in the enriched space P^{p+dp}(K)^2 x P^{p+dp}(K).

All local systems are built batched over elements; per-element orthonormal
bases come from one reference basis scaled by 1/sqrt(2|K|).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import legvander

from .mesh import Triangulation
from .polys import ReferenceBasis, reference_basis
from .quadrature import edge_rule, triangle_rule


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Scalar convection-diffusion: -eps Lap(u) + div(beta u) = s, u=g on bnd."""

    epsilon: float
    beta: tuple[float, float] = (0.0, 0.0)
    source: object = None  # callable (npts, 2) -> (npts,)
    dirichlet: object = None  # callable (npts, 2) -> (npts,)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def pure_diffusion(self) -> bool:
        return self.beta[0] == 0.0 and self.beta[1] == 0.0


@dataclass(frozen=True)
class SpaceSpec:
    p: int = 1
    dp: int = 2
    norm: str = "scaled_V"

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("trial order must be >= 1")
        if self.dp < 1:
            raise ValueError("enrichment must be >= 1 (test space must dominate)")
        if self.norm not in ("standard_V", "scaled_V"):
            raise ValueError(f"unknown norm {self.norm!r}")

    @property
    def test_order(self) -> int:
        return self.p + self.dp


# reference edge endpoints; local edge j is opposite local vertex j
_REF_EDGE = [((1.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (0.0, 0.0)), ((0.0, 0.0), (1.0, 0.0))]


@dataclass(frozen=True)
class SpaceData:
    """Reference quantities shared by every element for one SpaceSpec."""

    spec: SpaceSpec
    rb_test: ReferenceBasis
    rb_trial: ReferenceBasis
    vol_pts: np.ndarray
    vol_w: np.ndarray
    phi_test: np.ndarray  # (nq, m) values
    dphi_test: np.ndarray  # (2, nq, m) reference gradients
    phi_trial: np.ndarray  # (nq, n)
    edge_t: np.ndarray  # (ng,) Gauss points on [-1, 1]
    edge_w: np.ndarray
    leg: np.ndarray  # (ng, q) Legendre values, canonical parameter
    phi_test_edge: np.ndarray  # (3, 2, ng, m) test values on local edges

    @property
    def m(self) -> int:
        return self.rb_test.size

    @property
    def n(self) -> int:
        return self.rb_trial.size

    @property
    def q(self) -> int:
        return self.spec.p + 1

    @property
    def ncol(self) -> int:
        return 3 * self.n + 6 * self.q


_space_cache: dict[SpaceSpec, SpaceData] = {}


def space_data(spec: SpaceSpec) -> SpaceData:
    if spec in _space_cache:
        return _space_cache[spec]
    r = spec.test_order
    rb_t = reference_basis(r)
    rb_u = reference_basis(spec.p)
    pts, w = triangle_rule(2 * r + 2)
    gx, gy = rb_t.grads(pts)
    t, tw = edge_rule(2 * r + 1)
    phi_edge = np.empty((3, 2, len(t), rb_t.size))
    for j, (a, b) in enumerate(_REF_EDGE):
        a = np.array(a)
        b = np.array(b)
        fwd = a + 0.5 * (t[:, None] + 1.0) * (b - a)
        rev = b + 0.5 * (t[:, None] + 1.0) * (a - b)
        phi_edge[j, 0] = rb_t.values(fwd)
        phi_edge[j, 1] = rb_t.values(rev)
    data = SpaceData(
        spec=spec,
        rb_test=rb_t,
        rb_trial=rb_u,
        vol_pts=pts,
        vol_w=w,
        phi_test=rb_t.values(pts),
        dphi_test=np.stack([gx, gy]),
        phi_trial=rb_u.values(pts),
        edge_t=t,
        edge_w=tw,
        leg=legvander(t, spec.p),
        phi_test_edge=phi_edge,
    )
    _space_cache[spec] = data
    return data


@dataclass
class DofLayout:
    """Global trial numbering: element interiors first, then edge traces."""

    n_interior: int
    lam_offset: np.ndarray  # (n_edges,), -1 on boundary edges
    sig_offset: np.ndarray  # (n_edges,)
    n_total: int
    q: int
    n: int


def dof_layout(mesh: Triangulation, sd: SpaceData) -> DofLayout:
    ne = mesh.n_triangles
    n_int = 3 * sd.n * ne
    lam = np.full(mesh.n_edges, -1, dtype=np.int64)
    sig = np.empty(mesh.n_edges, dtype=np.int64)
    pos = n_int
    for e in range(mesh.n_edges):
        if mesh.edge_counts[e] == 2:
            lam[e] = pos
            pos += sd.q
        sig[e] = pos
        pos += sd.q
    return DofLayout(n_interior=n_int, lam_offset=lam, sig_offset=sig,
                     n_total=pos, q=sd.q, n=sd.n)


@dataclass
class LocalSystems:
    """Batched per-element enriched systems and their global column maps."""

    mesh: Triangulation
    sd: SpaceData
    layout: DofLayout
    B: np.ndarray  # (ne, 3m, ncol)
    G: np.ndarray  # (ne, 3m, 3m)
    load: np.ndarray  # (ne, 3m)
    col_map: np.ndarray  # (ne, ncol); dropped boundary-lambda columns -> n_total
    chol: np.ndarray = field(default=None)  # (ne, 3m, 3m) lower factors

    def cholesky(self) -> np.ndarray:
        if self.chol is None:
            try:
                self.chol = np.linalg.cholesky(self.G)
            except np.linalg.LinAlgError as exc:
                diag = np.linalg.eigvalsh(self.G)
                bad = int(np.argmin(diag[:, 0]))
                raise AssemblyError(f"Gram matrix not SPD on element {bad}") from exc
        return self.chol

    def local_system(self, k: int):
        """Dense (B_K, G_K, l_K, columns) view of one element."""
        return self.B[k], self.G[k], self.load[k], self.col_map[k]

    def gather(self, x: np.ndarray) -> np.ndarray:
        """Per-element local trial coefficients from a global vector."""
        padded = np.append(x, 0.0)
        return padded[self.col_map]


def _element_geometry(mesh: Triangulation):
    v = mesh.vertices[mesh.triangles]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # (ne,2,2)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    invJT = np.empty_like(J)
    invJT[:, 0, 0] = J[:, 1, 1] / detJ
    invJT[:, 0, 1] = -J[:, 1, 0] / detJ
    invJT[:, 1, 0] = -J[:, 0, 1] / detJ
    invJT[:, 1, 1] = J[:, 0, 0] / detJ
    return v, J, detJ, invJT


def build_local_systems(mesh: Triangulation, problem: ProblemSpec,
                        spec: SpaceSpec) -> LocalSystems:
    sd = space_data(spec)
    layout = dof_layout(mesh, sd)
    ne = mesh.n_triangles
    m, n, q = sd.m, sd.n, sd.q
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    _, J, detJ, invJT = _element_geometry(mesh)
    sqdet = np.sqrt(detJ)
    areas = mesh.areas
    w = sd.vol_w
    bx, by = problem.beta

    # element-independent moment blocks
    M0 = sd.phi_test.T @ (w[:, None] * sd.phi_trial)  # (m, n)
    Mx = sd.dphi_test[0].T @ (w[:, None] * sd.phi_trial)
    My = sd.dphi_test[1].T @ (w[:, None] * sd.phi_trial)
    Kab = np.empty((2, 2, m, m))
    for a in range(2):
        for b in range(2):
            Kab[a, b] = sd.dphi_test[a].T @ (w[:, None] * sd.dphi_test[b])

    # physical-gradient moment blocks per element: Gx[e] = int phi_u d(x) psi
    Gx = np.einsum("e,mn->emn", invJT[:, 0, 0], Mx) + np.einsum(
        "e,mn->emn", invJT[:, 0, 1], My)
    Gy = np.einsum("e,mn->emn", invJT[:, 1, 0], Mx) + np.einsum(
        "e,mn->emn", invJT[:, 1, 1], My)

    B = np.zeros((ne, 3 * m, sd.ncol))
    sl_tx, sl_ty, sl_v = slice(0, m), slice(m, 2 * m), slice(2 * m, 3 * m)
    c_sx, c_sy, c_u = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    B[:, sl_tx, c_sx] = M0 / problem.epsilon
    B[:, sl_ty, c_sy] = M0 / problem.epsilon
    B[:, sl_tx, c_u] = Gx
    B[:, sl_ty, c_u] = Gy
    B[:, sl_v, c_sx] = Gx
    B[:, sl_v, c_sy] = Gy
    if not problem.pure_diffusion:
        B[:, sl_v, c_u] = -(bx * Gx + by * Gy)

    # Gram matrices
    grad_w = np.sqrt(areas) if spec.norm == "scaled_V" else np.ones(ne)
    # D[a,b][e] = weight * int_K d_a psi_i d_b psi_j (physical derivatives)
    A = invJT  # rows of invJT give physical derivative coefficients
    D = np.einsum(
        "eac,ebd,cdij,e->eabij", A, A, Kab, grad_w, optimize=True
    )  # (ne, 2, 2, m, m)
    G = np.zeros((ne, 3 * m, 3 * m))
    eye = np.eye(m)
    G[:, sl_tx, sl_tx] = eye + D[:, 0, 0]
    G[:, sl_ty, sl_ty] = eye + D[:, 1, 1]
    G[:, sl_tx, sl_ty] = D[:, 0, 1]
    G[:, sl_ty, sl_tx] = np.swapaxes(D[:, 0, 1], 1, 2)
    G[:, sl_v, sl_v] = eye + D[:, 0, 0] + D[:, 1, 1]

    # volume load
    load = np.zeros((ne, 3 * m))
    if problem.source is not None:
        pts_phys = (
            v0[:, None, :]
            + np.einsum("eij,qj->eqi", J, sd.vol_pts)
        )
        svals = problem.source(pts_phys.reshape(-1, 2)).reshape(ne, -1)
        load[:, sl_v] = sqdet[:, None] * np.einsum("q,eq,qm->em", w, svals, sd.phi_test)

    # edge terms
    col_map = np.empty((ne, sd.ncol), dtype=np.int64)
    col_map[:, : 3 * n] = (3 * n) * np.arange(ne)[:, None] + np.arange(3 * n)
    tw = sd.edge_w
    kdeg = np.arange(q)
    for j in range(3):
        E = mesh.tri_edges[:, j]
        sgn = mesh.tri_edge_sign[:, j].astype(float)
        le = mesh.edge_length[E]
        nrm = mesh.edge_normal[E] * sgn[:, None]  # outward normal n_k
        lo = mesh.edges[E, 0]
        # orientation: canonical (lo -> hi) vs local CCW traversal a -> b
        a_loc = mesh.triangles[:, (j + 1) % 3]
        orient = (a_loc != lo).astype(np.int64)  # 1 -> reversed
        phi_e = sd.phi_test_edge[j][orient] / sqdet[:, None, None]  # (ne, ng, m)
        scale = np.sqrt((2.0 * kdeg + 1.0)[None, :] / le[:, None])  # (ne, q)
        trace = np.einsum("g,gk,egm->ekm", tw, sd.leg, phi_e)  # (ne, q, m)
        half_le = 0.5 * le
        lam_col = slice(3 * n + 2 * q * j, 3 * n + 2 * q * j + q)
        sig_col = slice(3 * n + 2 * q * j + q, 3 * n + 2 * q * (j + 1))
        interior = mesh.edge_counts[E] == 2
        # sigma_hat columns: -int sgn(n_k) sigma_hat v
        coeff = -sgn * half_le
        B[:, sl_v, sig_col] = np.einsum(
            "e,ekm->emk", coeff, trace * scale[:, :, None])
        # lambda columns on interior edges
        lam_fac = np.where(interior, 1.0, 0.0)
        cx = -nrm[:, 0] * half_le * lam_fac
        cy = -nrm[:, 1] * half_le * lam_fac
        tscaled = trace * scale[:, :, None]
        B[:, sl_tx, lam_col] = np.einsum("e,ekm->emk", cx, tscaled)
        B[:, sl_ty, lam_col] = np.einsum("e,ekm->emk", cy, tscaled)
        if not problem.pure_diffusion:
            babs = np.abs(bx * mesh.edge_normal[E, 0] + by * mesh.edge_normal[E, 1])
            cv = babs * sgn * half_le * lam_fac
            B[:, sl_v, lam_col] += np.einsum("e,ekm->emk", cv, tscaled)
        # boundary data terms on the load
        bnd = ~interior
        if np.any(bnd) and problem.dirichlet is not None:
            vlo = mesh.vertices[mesh.edges[E, 0]]
            vhi = mesh.vertices[mesh.edges[E, 1]]
            tpar = 0.5 * (sd.edge_t + 1.0)
            pts_e = vlo[bnd, None, :] + tpar[None, :, None] * (vhi - vlo)[bnd, None, :]
            g = problem.dirichlet(pts_e.reshape(-1, 2)).reshape(bnd.sum(), -1)
            gint = np.einsum("g,eg,egm->em", tw, g, phi_e[bnd])  # (nb, m)
            load[bnd, sl_tx] += (half_le[bnd] * nrm[bnd, 0])[:, None] * gint
            load[bnd, sl_ty] += (half_le[bnd] * nrm[bnd, 1])[:, None] * gint
            if not problem.pure_diffusion:
                bn = bx * nrm[bnd, 0] + by * nrm[bnd, 1]
                load[bnd, sl_v] += (-half_le[bnd] * bn)[:, None] * gint
        # global columns
        lam_glob = np.where(
            interior, layout.lam_offset[E], layout.n_total)
        col_map[:, lam_col] = lam_glob[:, None] + np.where(
            interior[:, None], kdeg[None, :], 0)
        col_map[:, sig_col] = layout.sig_offset[E][:, None] + kdeg[None, :]

    return LocalSystems(mesh=mesh, sd=sd, layout=layout, B=B, G=G,
                        load=load, col_map=col_map)
