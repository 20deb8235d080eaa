"""Metric-conforming remeshing by local operations (split / collapse / flip /
smooth) against a background metric field, plus MEDIT export/import hooks for
an external metric-based generator.

Metric convention: a triangle is unit when its edges have metric length^2 = 3,
so the conformity length of an edge is its Riemannian length divided by
sqrt(3); the remesher drives those toward the [L_lo, L_hi] band around 1.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, Triangulation, read_mesh, write_mesh
from .metric import MetricField, read_metric, riemannian_edge_lengths, write_metric

UNIT_LEN = np.sqrt(3.0)
INTERIOR = -2
CORNER = -1


class RemeshError(RuntimeError):
    pass


@dataclass
class RemeshConfig:
    length_lo: float = 1.0 / np.sqrt(2.0)
    length_hi: float = np.sqrt(2.0)
    max_passes: int = 30
    out_of_band_frac: float = 0.01
    polish_passes: int = 0
    backend: str = "builtin"

    def __post_init__(self):
        if not (0 < self.length_lo < 1 < self.length_hi):
            raise ValueError("need 0 < L_lo < 1 < L_hi")


def _vertex_kinds(mesh: Triangulation) -> np.ndarray:
    """INTERIOR, CORNER, or the (single) boundary-side tag per vertex."""
    kinds = np.full(mesh.n_vertices, INTERIOR, dtype=np.int64)
    tags_per_vertex = [set() for _ in range(mesh.n_vertices)]
    for e in mesh.boundary_edges:
        t = int(mesh.edge_tag[e])
        for v in mesh.edges[e]:
            tags_per_vertex[int(v)].add(t)
    for v, ts in enumerate(tags_per_vertex):
        if len(ts) == 1:
            kinds[v] = ts.pop()
        elif len(ts) > 1:
            kinds[v] = CORNER
    return kinds


def _boundary_sides(mesh: Triangulation) -> dict:
    """tag -> (p0, p1) segment endpoints of each straight polygon side."""
    sides = {}
    for t in np.unique(mesh.edge_tag[mesh.boundary_edges]):
        es = mesh.boundary_edges[mesh.edge_tag[mesh.boundary_edges] == t]
        pts = mesh.vertices[np.unique(mesh.edges[es])]
        d = pts[-1] - pts[0] if len(pts) > 1 else np.array([1.0, 0.0])
        e0 = mesh.edges[es[0]]
        d = mesh.vertices[e0[1]] - mesh.vertices[e0[0]]
        proj = pts @ d
        sides[int(t)] = (pts[np.argmin(proj)], pts[np.argmax(proj)])
    return sides


def _edge_tag_from_kinds(kinds, sides, verts, edge):
    a, b = kinds[edge[0]], kinds[edge[1]]
    if a > 0 and (b == a or b == CORNER):
        return int(a)
    if b > 0 and a == CORNER:
        return int(b)
    if a > 0 and b > 0 and a != b:
        return 0  # crosses a corner: cannot be a single boundary edge
    if a == CORNER and b == CORNER:
        mid = 0.5 * (verts[edge[0]] + verts[edge[1]])
        return _side_of_point(mid, sides)
    return 0


def _side_of_point(p, sides, tol=1e-8):
    best, best_d = 0, np.inf
    for t, (p0, p1) in sides.items():
        ab = p1 - p0
        L2 = ab @ ab
        s = np.clip(((p - p0) @ ab) / L2, 0.0, 1.0)
        d = np.hypot(*(p - (p0 + s * ab)))
        if d < best_d:
            best, best_d = t, d
    scale = max(np.hypot(*(p1 - p0)) for p0, p1 in sides.values())
    return best if best_d < tol * max(scale, 1.0) else 0


def _metric_lengths(field: MetricField, verts, edges):
    return riemannian_edge_lengths(
        field, verts[edges[:, 0]], verts[edges[:, 1]]) / UNIT_LEN


def _metric_midpoint(field: MetricField, a, b, samples: int = 17):
    """Point on segment a->b splitting its metric length in half."""
    t = np.linspace(0.0, 1.0, samples)
    pts = a + t[:, None] * (b - a)
    m = field.evaluate(pts)
    e = b - a
    sp = np.sqrt(np.maximum(
        m[:, 0] * e[0] ** 2 + 2 * m[:, 1] * e[0] * e[1] + m[:, 2] * e[1] ** 2, 0.0))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (sp[1:] + sp[:-1]) * np.diff(t))])
    if cum[-1] <= 0:
        return 0.5 * (a + b)
    ts = float(np.interp(0.5 * cum[-1], cum, t))
    ts = min(max(ts, 0.05), 0.95)
    return a + ts * (b - a)


def _rebuild(verts, tris):
    return Triangulation(np.asarray(verts), np.asarray(tris, dtype=np.int64),
                         require_tags=False)


def _split_pass(T, kinds, field, sides, L_hi):
    lengths = _metric_lengths(field, T.vertices, T.edges)
    cand = np.nonzero(lengths > L_hi)[0]
    cand = cand[np.argsort(-lengths[cand])]
    if not len(cand):
        return T, kinds, 0
    verts = list(T.vertices)
    kinds = list(kinds)
    tris = T.triangles.copy()
    new_tris = []
    dead = np.zeros(T.n_triangles, dtype=bool)
    dirty = np.zeros(T.n_triangles, dtype=bool)
    nsplit = 0
    for e in cand:
        adj = [k for k in T.edge_tris[e] if k >= 0]
        if any(dirty[k] for k in adj):
            continue
        u, v = T.edges[e]
        tag = 0
        if T.edge_counts[e] == 1:
            tag = _edge_tag_from_kinds(kinds, sides, np.asarray(verts), T.edges[e])
            if tag == 0:
                continue
        mid = _metric_midpoint(field, np.asarray(verts[u]), np.asarray(verts[v]))
        mi = len(verts)
        verts.append(mid)
        kinds.append(tag if tag > 0 else INTERIOR)
        ok_children = []
        for k in adj:
            tri = tris[k]
            t1 = np.where(tri == u, mi, tri)
            t2 = np.where(tri == v, mi, tri)
            ok_children.append((k, t1, t2))
        va = np.asarray(verts)
        good = all(
            _area(va, t1) > 0 and _area(va, t2) > 0 for _, t1, t2 in ok_children)
        if not good:
            verts.pop()
            kinds.pop()
            continue
        for k, t1, t2 in ok_children:
            dead[k] = True
            dirty[k] = True
            new_tris.append(t1)
            new_tris.append(t2)
        nsplit += 1
    if nsplit == 0:
        return T, np.asarray(kinds), 0
    out = np.vstack([tris[~dead]] + [np.asarray(new_tris)])
    return _rebuild(verts, out), np.asarray(kinds), nsplit


def _area(verts, tri):
    a, b, c = verts[tri[0]], verts[tri[1]], verts[tri[2]]
    u, v = b - a, c - a
    return 0.5 * float(u[0] * v[1] - u[1] * v[0])


def _collapse_pass(T, kinds, field, sides, L_lo):
    lengths = _metric_lengths(field, T.vertices, T.edges)
    cand = np.nonzero(lengths < L_lo)[0]
    cand = cand[np.argsort(lengths[cand])]
    if not len(cand):
        return T, kinds, 0
    verts = T.vertices.copy()
    kinds = np.asarray(kinds).copy()
    v_tris = [[] for _ in range(T.n_vertices)]
    for k, tri in enumerate(T.triangles):
        for vv in tri:
            v_tris[vv].append(k)
    tris = T.triangles.copy()
    alive_tri = np.ones(T.n_triangles, dtype=bool)
    locked = np.zeros(T.n_vertices, dtype=bool)
    merged_into = np.arange(T.n_vertices)
    ncol = 0
    bbox = T.vertices.max(0) - T.vertices.min(0)
    area_tol = 1e-14 * float(bbox @ bbox)
    for e in cand:
        u, v = T.edges[e]
        if locked[u] or locked[v] or merged_into[u] != u or merged_into[v] != v:
            continue
        ku, kv = kinds[u], kinds[v]
        on_boundary = T.edge_counts[e] == 1
        if ku == CORNER and kv == CORNER:
            continue
        if ku != INTERIOR and kv != INTERIOR and not on_boundary:
            continue  # interior edge between boundary vertices: would pinch
        # choose survivor position and kind
        if ku == CORNER:
            keep, drop, pos, kind = u, v, verts[u], CORNER
        elif kv == CORNER:
            keep, drop, pos, kind = v, u, verts[v], CORNER
        elif ku != INTERIOR and kv != INTERIOR:
            if ku != kv:
                continue
            keep, drop = u, v
            pos = _metric_midpoint(field, verts[u], verts[v])
            kind = ku
        elif ku != INTERIOR:
            keep, drop, pos, kind = u, v, verts[u], ku
        elif kv != INTERIOR:
            keep, drop, pos, kind = v, u, verts[v], kv
        else:
            keep, drop = u, v
            pos = _metric_midpoint(field, verts[u], verts[v])
            kind = INTERIOR
        ring = set(v_tris[u]) | set(v_tris[v])
        shared = [k for k in ring if alive_tri[k]
                  and u in tris[k] and v in tris[k]]
        if len(shared) != (1 if on_boundary else 2):
            continue
        old = verts[keep].copy()
        verts[keep] = pos
        ok = True
        for k in ring:
            if not alive_tri[k] or k in shared:
                continue
            tri = np.where(tris[k] == drop, keep, tris[k])
            if len(set(tri)) < 3 or _area(verts, tri) <= area_tol:
                ok = False
                break
        if not ok:
            verts[keep] = old
            continue
        for k in shared:
            alive_tri[k] = False
        for k in ring:
            if alive_tri[k]:
                tris[k] = np.where(tris[k] == drop, keep, tris[k])
                v_tris[keep].append(k)
        merged_into[drop] = keep
        kinds[keep] = kind
        locked[keep] = True
        ncol += 1
    if ncol == 0:
        return T, kinds, 0
    # compact vertex numbering
    used = np.zeros(len(verts), dtype=bool)
    final = tris[alive_tri]
    used[final.ravel()] = True
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(used.sum())
    return (_rebuild(verts[used], remap[final]), kinds[used], ncol)


def _flip_pass(T, kinds, field):
    verts = T.vertices
    tris = T.triangles.copy()
    dirty = np.zeros(T.n_triangles, dtype=bool)
    nflip = 0
    for e in T.interior_edges:
        k1, k2 = T.edge_tris[e]
        if dirty[k1] or dirty[k2]:
            continue
        u, v = T.edges[e]
        w1 = int(tris[k1][~np.isin(tris[k1], [u, v])][0])
        w2 = int(tris[k2][~np.isin(tris[k2], [u, v])][0])
        if w1 == w2:
            continue
        # candidate triangles keep CCW orientation
        t1 = _orient(verts, np.array([u, w1, w2]))
        t2 = _orient(verts, np.array([v, w2, w1]))
        bbox = verts.max(0) - verts.min(0)
        tol = 1e-13 * float(bbox @ bbox)
        if _area(verts, t1) <= tol or _area(verts, t2) <= tol:
            continue
        center = 0.25 * (verts[u] + verts[v] + verts[w1] + verts[w2])
        m = field.evaluate(center[None, :])[0]
        M = np.array([[m[0], m[1]], [m[1], m[2]]])
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            continue
        pu, pv, p1, p2 = (L.T @ (verts[i] - center) for i in (u, v, w1, w2))
        if _incircle(pu, pv, p1, p2) > 1e-13:
            tris[k1] = t1
            tris[k2] = t2
            dirty[k1] = dirty[k2] = True
            nflip += 1
    if nflip == 0:
        return T, nflip
    return _rebuild(verts, tris), nflip


def _orient(verts, tri):
    return tri if _area(verts, tri) > 0 else tri[[0, 2, 1]]


def _incircle(a, b, c, d):
    """> 0 when d lies inside the circumcircle of CCW triangle (a, b, c)."""
    u, v = b - a, c - a
    if u[0] * v[1] - u[1] * v[0] < 0:
        b, c = c, b
    rows = []
    for p in (a, b, c):
        q = p - d
        rows.append([q[0], q[1], q @ q])
    return float(np.linalg.det(np.array(rows)))


def _smooth_pass(T, kinds, field, relax=0.6):
    verts = T.vertices.copy()
    neighbors = [set() for _ in range(T.n_vertices)]
    for u, v in T.edges:
        neighbors[u].add(v)
        neighbors[v].add(u)
    v_tris = [[] for _ in range(T.n_vertices)]
    for k, tri in enumerate(T.triangles):
        for vv in tri:
            v_tris[vv].append(k)
    for v in range(T.n_vertices):
        if kinds[v] != INTERIOR:
            continue
        nb = np.array(sorted(neighbors[v]))
        w = riemannian_edge_lengths(
            field, np.repeat(verts[v][None, :], len(nb), 0), verts[nb])
        if w.sum() <= 0:
            continue
        target = (w[:, None] * verts[nb]).sum(0) / w.sum()
        old = verts[v].copy()
        dev_old = np.max(np.abs(w / UNIT_LEN - 1.0))
        verts[v] = old + relax * (target - old)
        w_new = riemannian_edge_lengths(
            field, np.repeat(verts[v][None, :], len(nb), 0), verts[nb])
        dev_new = np.max(np.abs(w_new / UNIT_LEN - 1.0))
        if dev_new >= dev_old or any(
                _area(verts, T.triangles[k]) <= 0 for k in v_tris[v]):
            verts[v] = old
    return _rebuild(verts, T.triangles)


def remesh(mesh: Triangulation, field: MetricField,
           config: RemeshConfig = None) -> Triangulation:
    config = config or RemeshConfig()
    if config.backend != "builtin":
        raise RemeshError("only the builtin backend runs in-process; use "
                          "export_external/import_external for others")
    kinds = _vertex_kinds(mesh)
    sides = _boundary_sides(mesh)
    T = Triangulation(mesh.vertices.copy(), mesh.triangles.copy(),
                      require_tags=False)
    for _ in range(config.max_passes):
        T, kinds, nsplit = _split_pass(T, kinds, field, sides, config.length_hi)
        T, kinds, ncol = _collapse_pass(T, kinds, field, sides, config.length_lo)
        T, nflip = _flip_pass(T, kinds, field)
        T = _smooth_pass(T, kinds, field)
        lengths = _metric_lengths(field, T.vertices, T.edges)
        out = np.mean((lengths < config.length_lo) | (lengths > config.length_hi))
        if out < config.out_of_band_frac:
            break
        if nsplit == 0 and ncol == 0 and nflip == 0:
            break
    for _ in range(config.polish_passes):
        T, nflip = _flip_pass(T, kinds, field)
        T = _smooth_pass(T, kinds, field)
        if nflip == 0:
            break
    return _tag_result(T, kinds, sides)


def _tag_result(T: Triangulation, kinds, sides) -> Triangulation:
    tags = np.zeros(T.n_edges, dtype=np.int64)
    for e in T.boundary_edges:
        t = _edge_tag_from_kinds(kinds, sides, T.vertices, T.edges[e])
        if t == 0:
            raise RemeshError(
                f"cannot tag boundary edge {T.edges[e]} after remeshing")
        tags[e] = t
    return Triangulation(T.vertices, T.triangles, T.edges, tags)


# -- external-generator plumbing -----------------------------------------


def export_external(mesh: Triangulation, field: MetricField, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    write_mesh(mesh, os.path.join(directory, "input.mesh"))
    write_metric(field, os.path.join(directory, "input.sol"))


def import_external(directory) -> Triangulation:
    path = os.path.join(directory, "output.mesh")
    if not os.path.exists(path):
        raise RemeshError(f"external generator output not found: {path}")
    return read_mesh(path)
