"""Triangulation storage, structured generators, and MEDIT ASCII IO.

Indices are 0-based in memory and 1-based in MEDIT files.  Every edge has a
canonical orientation (lower vertex index to higher); its canonical normal is
the unit tangent rotated +90 degrees.  Per-triangle signs relate each
element's outward normal to the canonical one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERACY_REL_TOL = 1e-14


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    u, v = b - a, c - a
    return 0.5 * (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])


@dataclass
class Triangulation:
    """A 2D triangulation with tagged boundary edges.

    edge_tag is 0 for interior edges and a positive polygon-side tag for
    boundary edges.  Derived connectivity is built eagerly in __post_init__.
    """

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counterclockwise
    edges: np.ndarray = field(default=None)  # (ne, 2), lo < hi
    edge_tag: np.ndarray = field(default=None)  # (ne,)
    require_tags: bool = True  # internal: builders tag in a second pass

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self._build_connectivity()
        self.validate()

    def _build_connectivity(self):
        tris = self.triangles
        # local edge j is opposite local vertex j
        raw = np.concatenate(
            [tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]], axis=0
        )
        canon = np.sort(raw, axis=1)
        uniq, inverse, counts = np.unique(
            canon, axis=0, return_inverse=True, return_counts=True
        )
        nt = len(tris)
        self.tri_edges = inverse.reshape(3, nt).T.copy()
        if self.edges is None:
            self.edges = uniq
            self.edge_tag = np.zeros(len(uniq), dtype=np.int64)
        else:
            # remap provided tags onto the derived edge set
            given = np.sort(np.asarray(self.edges, dtype=np.int64), axis=1)
            tag = np.zeros(len(uniq), dtype=np.int64)
            lut = {tuple(e): t for e, t in zip(given, np.asarray(self.edge_tag))}
            for i, e in enumerate(uniq):
                t = lut.get((e[0], e[1]))
                if t is not None:
                    tag[i] = t
            self.edges = uniq
            self.edge_tag = tag
        self.edge_counts = counts
        # element adjacency of each edge
        self.edge_tris = np.full((len(uniq), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        tri_of_entry = np.tile(np.arange(nt), 3)
        sorted_edges = inverse[order]
        sorted_tris = tri_of_entry[order]
        starts = np.searchsorted(sorted_edges, np.arange(len(uniq)))
        self.edge_tris[:, 0] = sorted_tris[starts]
        second = counts == 2
        self.edge_tris[second, 1] = sorted_tris[starts[second] + 1]
        # sign: +1 when the element's outward normal equals the canonical one,
        # which happens when the CCW traversal runs hi -> lo.
        self.tri_edge_sign = np.where(raw[:, 0] > raw[:, 1], 1, -1).reshape(3, -1).T.copy()
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        self.edge_length = np.hypot(t[:, 0], t[:, 1])
        tn = t / self.edge_length[:, None]
        self.edge_normal = np.column_stack([-tn[:, 1], tn[:, 0]])
        self.areas = signed_areas(self.vertices, self.triangles)
        self.centroids = self.vertices[self.triangles].mean(axis=1)

    # -- queries ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_counts == 2)[0]

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_counts == 1)[0]

    def validate(self):
        if self.triangles.size and self.triangles.max() >= self.n_vertices:
            raise MeshError("triangle references a vertex out of range")
        if self.triangles.min(initial=0) < 0:
            raise MeshError("negative vertex index")
        bbox = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        scale = float(np.hypot(bbox[0], bbox[1])) ** 2
        if np.any(self.areas <= DEGENERACY_REL_TOL * scale):
            bad = int(np.argmin(self.areas))
            raise MeshError(
                f"triangle {bad} has non-positive or degenerate area {self.areas[bad]:g}"
            )
        if np.any(self.edge_counts > 2):
            raise MeshError("edge shared by more than two triangles")
        if self.require_tags and np.any((self.edge_counts == 1) & (self.edge_tag <= 0)):
            raise MeshError("boundary edge without a positive tag")
        if np.any((self.edge_counts == 2) & (self.edge_tag != 0)):
            raise MeshError("interior edge carries a boundary tag")

    def h_min(self) -> float:
        return float(self.edge_length.min())


# -- structured generators ----------------------------------------------


def tag_boundary_edges(mesh_vertices, edges, polygon, tol=1e-9):
    """Tag edges by the polygon side containing their midpoint (1-based)."""
    mids = 0.5 * (mesh_vertices[edges[:, 0]] + mesh_vertices[edges[:, 1]])
    tags = np.zeros(len(edges), dtype=np.int64)
    npoly = len(polygon)
    for side in range(npoly):
        a = np.asarray(polygon[side], dtype=float)
        b = np.asarray(polygon[(side + 1) % npoly], dtype=float)
        ab = b - a
        L2 = ab @ ab
        t = ((mids - a) @ ab) / L2
        proj = a + t[:, None] * ab
        on = (np.hypot(*(mids - proj).T) < tol) & (t > -tol) & (t < 1 + tol)
        tags[on & (tags == 0)] = side + 1
    return tags


UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
L_SHAPE = [(0.0, 0.0), (0.0, -1.0), (-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, 0.0)]


def _grid_mesh(x, y, keep=None):
    nx, ny = len(x) - 1, len(y) - 1
    X, Y = np.meshgrid(x, y, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    used = np.zeros(len(verts), dtype=bool)
    tris = []
    for i in range(nx):
        for j in range(ny):
            if keep is not None and not keep(0.5 * (x[i] + x[i + 1]), 0.5 * (y[j] + y[j + 1])):
                continue
            v00 = i * (ny + 1) + j
            v10 = (i + 1) * (ny + 1) + j
            v01 = i * (ny + 1) + j + 1
            v11 = (i + 1) * (ny + 1) + j + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
            used[[v00, v10, v01, v11]] = True
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    tris = remap[np.array(tris, dtype=np.int64)]
    return verts[used], tris


def structured_mesh(nx: int, ny: int, polygon=None) -> Triangulation:
    """Structured triangulation of the unit square, 2 triangles per cell."""
    poly = polygon or UNIT_SQUARE
    verts, tris = _grid_mesh(np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1))
    return _finalize(verts, tris, poly)


def l_shaped_mesh(cells_per_unit: int = 2) -> Triangulation:
    """Structured mesh of [-1,1]^2 minus the bottom-right unit square."""
    n = 2 * cells_per_unit
    x = np.linspace(-1, 1, n + 1)
    verts, tris = _grid_mesh(x, x, keep=lambda cx, cy: not (cx > 0 and cy < 0))
    return _finalize(verts, tris, L_SHAPE)


def _finalize(verts, tris, polygon):
    mesh = Triangulation(verts, tris, require_tags=False)
    bed = mesh.boundary_edges
    tags = tag_boundary_edges(mesh.vertices, mesh.edges[bed], polygon)
    if np.any(tags == 0):
        raise MeshError("boundary edge not on any polygon side")
    edge_tag = mesh.edge_tag.copy()
    edge_tag[bed] = tags
    return Triangulation(mesh.vertices, mesh.triangles, mesh.edges, edge_tag)


# -- MEDIT ASCII IO ------------------------------------------------------


def write_mesh(mesh: Triangulation, path) -> None:
    bed = mesh.boundary_edges
    with open(path, "w") as f:
        f.write("MeshVersionFormatted 2\n\nDimension 2\n\n")
        f.write(f"Vertices\n{mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g} 0\n")
        f.write(f"\nEdges\n{len(bed)}\n")
        for e in bed:
            v0, v1 = mesh.edges[e]
            f.write(f"{v0 + 1} {v1 + 1} {mesh.edge_tag[e]}\n")
        f.write(f"\nTriangles\n{mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a + 1} {b + 1} {c + 1} 0\n")
        f.write("\nEnd\n")


def read_mesh(path) -> Triangulation:
    with open(path) as f:
        lines = f.read().splitlines()
    i = 0
    verts = edges = tags = tris = None

    def next_tokens():
        nonlocal i
        while i < len(lines):
            toks = lines[i].split()
            i += 1
            if toks:
                return toks, i
        return None, i

    while True:
        toks, ln = next_tokens()
        if toks is None:
            break
        key = toks[0]
        if key == "MeshVersionFormatted" or key == "Dimension":
            if len(toks) == 1:
                next_tokens()
        elif key == "Vertices":
            (ct, _) = next_tokens() if len(toks) == 1 else ([toks[1]], ln)
            n = int(ct[0])
            verts = np.empty((n, 2))
            for k in range(n):
                row, ln = next_tokens()
                if row is None or len(row) < 2:
                    raise MeshParseError("truncated Vertices section", ln)
                verts[k] = float(row[0]), float(row[1])
        elif key == "Edges":
            (ct, _) = next_tokens() if len(toks) == 1 else ([toks[1]], ln)
            n = int(ct[0])
            edges = np.empty((n, 2), dtype=np.int64)
            tags = np.empty(n, dtype=np.int64)
            for k in range(n):
                row, ln = next_tokens()
                if row is None or len(row) < 3:
                    raise MeshParseError("truncated Edges section", ln)
                a, b, t = int(row[0]), int(row[1]), int(row[2])
                if a < 1 or b < 1:
                    raise MeshParseError(f"edge vertex index {min(a, b)} not 1-based", ln)
                edges[k] = a - 1, b - 1
                tags[k] = t
        elif key == "Triangles":
            (ct, _) = next_tokens() if len(toks) == 1 else ([toks[1]], ln)
            n = int(ct[0])
            tris = np.empty((n, 3), dtype=np.int64)
            for k in range(n):
                row, ln = next_tokens()
                if row is None or len(row) < 3:
                    raise MeshParseError("truncated Triangles section", ln)
                a, b, c = int(row[0]), int(row[1]), int(row[2])
                if min(a, b, c) < 1:
                    raise MeshParseError(f"triangle vertex index {min(a, b, c)} not 1-based", ln)
                tris[k] = a - 1, b - 1, c - 1
        elif key == "End":
            break
    if verts is None or tris is None:
        raise MeshParseError("missing Vertices or Triangles section")
    if tris.max() >= len(verts):
        raise MeshParseError("triangle vertex index out of range")
    return Triangulation(verts, tris, edges, tags)
