"""Study reports: CSV records and legacy ASCII VTK field dumps."""

from __future__ import annotations

import csv
import io

import numpy as np

from .loop import COLUMNS, StudyRecord
from .mesh import Triangulation

VTK_VERSION = "4.2"


def record_to_csv(record: StudyRecord) -> str:
    """Serialize a study record with the fixed column order.  Values are
    rendered with repr (shortest round-trip form) so two identical runs
    produce byte-identical output."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in record.rows:
        writer.writerow([_cell(row.get(name)) for name in COLUMNS])
    return buf.getvalue()


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(record: StudyRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(record_to_csv(record))


def read_csv(path_or_text) -> StudyRecord:
    """Parse a CSV produced by write_csv back into a bare StudyRecord
    (case/p/mode metadata are not stored in the file)."""
    if "\n" in str(path_or_text):
        text = path_or_text
    else:
        with open(path_or_text) as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != COLUMNS:
        raise ValueError(f"unexpected CSV header {header!r}")
    record = StudyRecord(case="", p=0, mode="")
    for line in reader:
        row = {}
        for name, cell in zip(COLUMNS, line):
            if cell == "":
                row[name] = None
            elif name in ("cycle", "ne", "ndof"):
                row[name] = int(cell)
            else:
                row[name] = float(cell)
        record.rows.append(row)
    return record


def vtk_dump(mesh: Triangulation, point_data: dict = None,
             cell_data: dict = None, title: str = "dpgadapt fields") -> str:
    """Legacy ASCII VTK unstructured grid with optional scalar fields."""
    out = io.StringIO()
    w = out.write
    w(f"# vtk DataFile Version {VTK_VERSION}\n")
    w(title[:255] + "\n")
    w("ASCII\n")
    w("DATASET UNSTRUCTURED_GRID\n")
    nv = mesh.n_vertices
    ne = mesh.n_triangles
    w(f"POINTS {nv} double\n")
    for x, y in mesh.vertices:
        w(f"{float(x)!r} {float(y)!r} 0.0\n")
    w(f"CELLS {ne} {4 * ne}\n")
    for a, b, c in mesh.triangles:
        w(f"3 {a} {b} {c}\n")
    w(f"CELL_TYPES {ne}\n")
    for _ in range(ne):
        w("5\n")  # VTK_TRIANGLE
    for keyword, n, data in (("POINT_DATA", nv, point_data),
                             ("CELL_DATA", ne, cell_data)):
        if not data:
            continue
        w(f"{keyword} {n}\n")
        for name in sorted(data):
            values = np.asarray(data[name], dtype=float)
            if values.shape != (n,):
                raise ValueError(
                    f"field {name!r}: expected shape ({n},), got {values.shape}")
            w(f"SCALARS {name} double 1\n")
            w("LOOKUP_TABLE default\n")
            for v in values:
                w(f"{float(v)!r}\n")
    return out.getvalue()


def write_vtk(path, mesh: Triangulation, point_data: dict = None,
              cell_data: dict = None, title: str = "dpgadapt fields") -> None:
    with open(path, "w") as fh:
        fh.write(vtk_dump(mesh, point_data, cell_data, title))


def solution_fields(sol, plan=None) -> tuple[dict, dict]:
    """Standard export payload: vertex-sampled u_h plus per-element eta
    (and the adaptation plan's density/aspect when given)."""
    from .solve import evaluate_field

    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    uh = evaluate_field(sol, 2, corners)  # (ne, 3) values at triangle corners
    nv = sol.mesh.n_vertices
    acc = np.zeros(nv)
    cnt = np.zeros(nv)
    for local in range(3):
        idx = sol.mesh.triangles[:, local]
        np.add.at(acc, idx, uh[:, local])
        np.add.at(cnt, idx, 1.0)
    point = {"u_h": acc / np.maximum(cnt, 1.0)}
    cell = {"eta": sol.err_rep.eta}
    if plan is not None:
        cell["density"] = plan.density
        cell["aspect"] = plan.beta
    return point, cell


def parse_vtk(text: str) -> dict:
    """Minimal structural parser for the files vtk_dump emits: returns
    points, cells, and scalar fields; raises ValueError on malformed input."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# vtk DataFile Version"):
        raise ValueError("missing VTK header")
    if lines[2] != "ASCII" or lines[3] != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("not an ASCII unstructured grid")
    i = 4
    out = {"point_data": {}, "cell_data": {}}
    nv = ne = 0
    while i < len(lines):
        parts = lines[i].split()
        key = parts[0]
        if key == "POINTS":
            nv = int(parts[1])
            pts = [list(map(float, lines[i + 1 + k].split())) for k in range(nv)]
            out["points"] = np.array(pts)
            i += 1 + nv
        elif key == "CELLS":
            ne = int(parts[1])
            cells = []
            for k in range(ne):
                row = list(map(int, lines[i + 1 + k].split()))
                if row[0] != 3 or len(row) != 4:
                    raise ValueError("non-triangle cell")
                cells.append(row[1:])
            out["cells"] = np.array(cells)
            i += 1 + ne
        elif key == "CELL_TYPES":
            n = int(parts[1])
            if any(lines[i + 1 + k] != "5" for k in range(n)):
                raise ValueError("unexpected cell type")
            i += 1 + n
        elif key in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if key == "POINT_DATA" else "cell_data"
            n = int(parts[1])
            i += 1
            while i < len(lines) and lines[i].startswith("SCALARS"):
                name = lines[i].split()[1]
                vals = [float(lines[i + 2 + k]) for k in range(n)]
                out[section][name] = np.array(vals)
                i += 2 + n
        else:
            raise ValueError(f"unexpected keyword {key!r}")
    if "points" not in out or "cells" not in out:
        raise ValueError("incomplete VTK file")
    if out["cells"].size and out["cells"].max() >= nv:
        raise ValueError("cell index out of range")
    return out
