"""Metric-tensor algebra: implied metrics, decomposition, Riemannian lengths,
and log-Euclidean vertex-field synthesis.

Tensors are stored as (..., 3) arrays [m11, m12, m22].  The scalar wrappers
MetricTensor / MetricDecomposition expose the same operations on single
tensors for convenience.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .mesh import Triangulation

UNIT_EDGE_SQ = 3.0  # metric length^2 of a unit triangle's edges
UNIT_AREA = 3.0 * np.sqrt(3.0) / 4.0  # area of a metric-unit triangle


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricTensor:
    m11: float
    m12: float
    m22: float

    def __post_init__(self):
        if not (self.m11 > 0 and self.m11 * self.m22 - self.m12**2 > 0):
            raise MetricError(f"tensor {self} is not SPD")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.m11, self.m12, self.m22])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])


@dataclass(frozen=True)
class MetricDecomposition:
    density: float
    aspect_ratio: float
    orientation: float  # major-axis angle in [0, pi)

    def __post_init__(self):
        if self.density <= 0:
            raise MetricError("density must be positive")
        if self.aspect_ratio < 1:
            raise MetricError("aspect ratio must be >= 1")


def _as_matrices(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-1] + (2, 2))
    out[..., 0, 0] = m[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = m[..., 1]
    out[..., 1, 1] = m[..., 2]
    return out


def _from_matrices(M: np.ndarray) -> np.ndarray:
    return np.stack([M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]], axis=-1)


def implied_metric(vertices: np.ndarray) -> np.ndarray:
    """Tensors making the given triangles unit (edge length^2 = 3).

    vertices: (..., 3, 2).  Returns (..., 3) tensors.
    """
    v = np.asarray(vertices, dtype=float)
    e = np.stack(
        [v[..., 1, :] - v[..., 0, :], v[..., 2, :] - v[..., 1, :], v[..., 0, :] - v[..., 2, :]],
        axis=-2,
    )
    u, v = e[..., 0, :], -e[..., 2, :]
    area = 0.5 * np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
    bbox = v.max(axis=-2) - v.min(axis=-2)
    scale = np.sum(bbox**2, axis=-1)
    if np.any(area <= 1e-14 * scale):
        raise MetricError("degenerate triangle in implied_metric")
    A = np.stack(
        [e[..., 0] ** 2, 2.0 * e[..., 0] * e[..., 1], e[..., 1] ** 2], axis=-1
    )
    rhs = np.full(v.shape[:-2] + (3, 1), UNIT_EDGE_SQ)
    return np.linalg.solve(A, rhs)[..., 0]


def metric_decompose(m) -> MetricDecomposition:
    """Split an SPD tensor into (density, aspect ratio, major-axis angle)."""
    arr = m.array if isinstance(m, MetricTensor) else np.asarray(m, dtype=float)
    m11, m12, m22 = arr
    det = m11 * m22 - m12**2
    if m11 <= 0 or det <= 0:
        raise MetricError("tensor is not SPD")
    tr = m11 + m22
    disc = np.sqrt(max((m11 - m22) ** 2 / 4 + m12**2, 0.0))
    a_min = tr / 2 - disc
    a_max = tr / 2 + disc
    density = np.sqrt(det)
    beta = np.sqrt(a_max / a_min)
    if disc < 1e-14 * tr:
        theta = 0.0
    else:
        # eigenvector of the smaller eigenvalue (major axis)
        if abs(m11 - a_min) > abs(m22 - a_min):
            vec = (m12, a_min - m11)
        else:
            vec = (a_min - m22, m12)
        theta = float(np.arctan2(vec[1], vec[0])) % np.pi
    return MetricDecomposition(float(density), float(beta), theta)


def decompose_array(tensors: np.ndarray):
    """Batched spectral split of (..., 3) tensors.

    Returns (density, aspect_ratio, orientation) arrays; orientation is the
    major-axis angle in [0, pi)."""
    t = np.asarray(tensors, dtype=float)
    m11, m12, m22 = t[..., 0], t[..., 1], t[..., 2]
    det = m11 * m22 - m12**2
    if np.any(m11 <= 0) or np.any(det <= 0):
        raise MetricError("tensor is not SPD")
    tr = m11 + m22
    disc = np.sqrt(np.maximum((m11 - m22) ** 2 / 4 + m12**2, 0.0))
    a_min = tr / 2 - disc
    a_max = tr / 2 + disc
    density = np.sqrt(det)
    beta = np.sqrt(a_max / np.maximum(a_min, 1e-300))
    vx = np.where(np.abs(m11 - a_min) > np.abs(m22 - a_min), m12, a_min - m22)
    vy = np.where(np.abs(m11 - a_min) > np.abs(m22 - a_min), a_min - m11, m12)
    theta = np.where(disc < 1e-14 * tr, 0.0, np.arctan2(vy, vx) % np.pi)
    return density, beta, theta


def metric_compose(dec: MetricDecomposition | None = None, *, density=None,
                   aspect_ratio=None, orientation=None) -> MetricTensor:
    if dec is not None:
        density, aspect_ratio, orientation = dec.density, dec.aspect_ratio, dec.orientation
    arr = compose_array(np.asarray([density]), np.asarray([aspect_ratio]),
                        np.asarray([orientation]))[0]
    return MetricTensor(*arr)


def compose_array(density, aspect_ratio, orientation) -> np.ndarray:
    """Batched inverse of the spectral decomposition; (..., 3) tensors."""
    d = np.asarray(density, dtype=float)
    if np.any(d <= 0):
        raise MetricError("density must be positive")
    beta = np.asarray(aspect_ratio, dtype=float)
    th = np.asarray(orientation, dtype=float)
    a_major = d / beta  # eigenvalue along the major axis
    a_minor = d * beta
    c, s = np.cos(th), np.sin(th)
    m11 = a_major * c**2 + a_minor * s**2
    m22 = a_major * s**2 + a_minor * c**2
    m12 = (a_major - a_minor) * c * s
    return np.stack([m11, m12, m22], axis=-1)


def element_area_density(vertices: np.ndarray) -> tuple[float, float]:
    """Signed area and implied mesh density of one triangle."""
    v = np.asarray(vertices, dtype=float)
    u, w = v[1] - v[0], v[2] - v[0]
    area = 0.5 * float(u[0] * w[1] - u[1] * w[0])
    m = implied_metric(v)
    density = float(np.sqrt(m[0] * m[2] - m[1] ** 2))
    return area, density


# -- log-Euclidean algebra ----------------------------------------------


def metric_log(m: np.ndarray) -> np.ndarray:
    M = _as_matrices(m)
    w, V = np.linalg.eigh(M)
    if np.any(w <= 0):
        raise MetricError("non-SPD tensor in metric_log")
    L = np.einsum("...ij,...j,...kj->...ik", V, np.log(w), V)
    return _from_matrices(L)


def metric_exp(m: np.ndarray) -> np.ndarray:
    M = _as_matrices(m)
    w, V = np.linalg.eigh(M)
    E = np.einsum("...ij,...j,...kj->...ik", V, np.exp(w), V)
    return _from_matrices(E)


def vertex_metric_from_elements(mesh: Triangulation, element_tensors: np.ndarray) -> np.ndarray:
    """Per-vertex tensors as area-weighted log-Euclidean means of incident
    element tensors; SPD by construction."""
    logs = metric_log(element_tensors)
    nv = mesh.n_vertices
    acc = np.zeros((nv, 3))
    wsum = np.zeros(nv)
    w = mesh.areas
    for local in range(3):
        idx = mesh.triangles[:, local]
        np.add.at(acc, idx, logs * w[:, None])
        np.add.at(wsum, idx, w)
    if np.any(wsum == 0):
        raise MetricError("isolated vertex: no incident element")
    return metric_exp(acc / wsum[:, None])


# -- metric fields -------------------------------------------------------


class MetricField:
    """Per-vertex SPD tensors on a background mesh, interpolated
    log-Euclideanly with barycentric weights."""

    def __init__(self, mesh: Triangulation, tensors: np.ndarray):
        tensors = np.asarray(tensors, dtype=float)
        if tensors.shape != (mesh.n_vertices, 3):
            raise MetricError("one tensor per vertex required")
        self.mesh = mesh
        self.tensors = tensors
        self.log_tensors = metric_log(tensors)  # also validates SPD
        self._finder = None

    def _trifinder(self):
        if self._finder is None:
            from matplotlib.tri import Triangulation as MplTri

            t = MplTri(self.mesh.vertices[:, 0], self.mesh.vertices[:, 1],
                       self.mesh.triangles)
            self._finder = t.get_trifinder()
        return self._finder

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Interpolated tensors at arbitrary points (n, 2) -> (n, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tri = np.asarray(self._trifinder()(pts[:, 0], pts[:, 1]))
        missing = tri < 0
        if np.any(missing):
            # points marginally outside the background mesh: nearest vertex
            from scipy.spatial import cKDTree

            tree = cKDTree(self.mesh.vertices)
            _, nearest = tree.query(pts[missing])
        tri_safe = np.where(tri < 0, 0, tri)
        tv = self.mesh.triangles[tri_safe]
        a = self.mesh.vertices[tv[:, 0]]
        b = self.mesh.vertices[tv[:, 1]]
        c = self.mesh.vertices[tv[:, 2]]
        def cross2(u, v):
            return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

        det = cross2(b - a, c - a)
        w1 = cross2(pts - a, c - a) / det
        w2 = cross2(b - a, pts - a) / det
        w0 = 1.0 - w1 - w2
        logs = (
            w0[:, None] * self.log_tensors[tv[:, 0]]
            + w1[:, None] * self.log_tensors[tv[:, 1]]
            + w2[:, None] * self.log_tensors[tv[:, 2]]
        )
        if np.any(missing):
            logs[missing] = self.log_tensors[nearest]
        return metric_exp(logs)


_GL5_X, _GL5_W = roots_legendre(5)


def riemannian_edge_length(field, x1, x2) -> float:
    """Metric length of the segment x1 -> x2 by 5-point Gauss-Legendre."""
    return float(riemannian_edge_lengths(field, np.asarray(x1)[None, :],
                                         np.asarray(x2)[None, :])[0])


def riemannian_edge_lengths(field, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Batched metric edge lengths; x1, x2 are (n, 2)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    e = x2 - x1
    t = 0.5 * (_GL5_X + 1.0)
    pts = x1[:, None, :] + t[None, :, None] * e[:, None, :]
    m = field.evaluate(pts.reshape(-1, 2)).reshape(len(x1), len(t), 3)
    q = (
        m[..., 0] * e[:, None, 0] ** 2
        + 2.0 * m[..., 1] * e[:, None, 0] * e[:, None, 1]
        + m[..., 2] * e[:, None, 1] ** 2
    )
    return 0.5 * np.sqrt(q) @ _GL5_W


class ConstantField:
    """Uniform metric field, handy for tests and isotropic targets."""

    def __init__(self, tensor):
        t = tensor.array if isinstance(tensor, MetricTensor) else np.asarray(tensor, float)
        self.tensor = t

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.broadcast_to(self.tensor, (len(pts), 3)).copy()


def write_metric(field: MetricField, path) -> None:
    """MEDIT .sol with one symmetric-tensor field at vertices."""
    with open(path, "w") as f:
        f.write("MeshVersionFormatted 2\n\nDimension 2\n\n")
        f.write(f"SolAtVertices\n{len(field.tensors)}\n1 3\n")
        for m11, m12, m22 in field.tensors:
            f.write(f"{m11:.17g} {m12:.17g} {m22:.17g}\n")
        f.write("\nEnd\n")


def read_metric(mesh: Triangulation, path) -> MetricField:
    with open(path) as f:
        toks = f.read().split()
    try:
        k = toks.index("SolAtVertices")
    except ValueError:
        raise MetricError("missing SolAtVertices section") from None
    n = int(toks[k + 1])
    ntypes, ftype = int(toks[k + 2]), int(toks[k + 3])
    if ntypes != 1 or ftype != 3:
        raise MetricError("expected a single symmetric-tensor field")
    vals = np.array(toks[k + 4 : k + 4 + 3 * n], dtype=float).reshape(n, 3)
    return MetricField(mesh, vals)
