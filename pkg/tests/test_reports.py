import numpy as np
import pytest

from dpgadapt.assembly import ProblemSpec, SpaceSpec
from dpgadapt.loop import COLUMNS, StudyRecord
from dpgadapt.mesh import structured_mesh
from dpgadapt.reports import (
    parse_vtk,
    read_csv,
    record_to_csv,
    solution_fields,
    vtk_dump,
    write_csv,
    write_vtk,
)
from dpgadapt.solve import solve


def small_solution():
    prob = ProblemSpec(epsilon=1.0, beta=(0.0, 0.0),
                       source=lambda x: np.ones(len(x)),
                       dirichlet=lambda x: np.zeros(len(x)))
    return solve(structured_mesh(3, 3), prob,
                 SpaceSpec(p=1, dp=2, norm="standard_V"))


def sample_record():
    rec = StudyRecord(case="demo", p=1, mode="solution")
    rng = np.random.default_rng(3)
    for cycle in range(4):
        row = {"cycle": cycle, "ne": 32 + cycle, "ndof": 480 + 7 * cycle}
        for name in COLUMNS[3:]:
            row[name] = float(rng.uniform(1e-8, 1.0))
        rec.rows.append(row)
    return rec


def test_csv_round_trip(tmp_path):
    rec = sample_record()
    path = tmp_path / "study.csv"
    write_csv(rec, path)
    back = read_csv(path)
    for name in COLUMNS:
        np.testing.assert_array_equal(back.column(name), rec.column(name))


def test_csv_header_and_reproducibility():
    rec = sample_record()
    text = record_to_csv(rec)
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert record_to_csv(rec) == text  # bit-for-bit stable
    # integer columns stay integers in the text form
    first = text.splitlines()[1].split(",")
    assert first[0] == "0" and first[1] == "32" and first[2] == "480"


def test_empty_record_gives_header_only():
    rec = StudyRecord(case="demo", p=1, mode="solution")
    assert record_to_csv(rec) == ",".join(COLUMNS) + "\n"


def test_read_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("cycle,ne\n0,1\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_vtk_dump_structure():
    sol = small_solution()
    text = vtk_dump(sol.mesh, point_data=solution_fields(sol)[0],
                    cell_data=solution_fields(sol)[1])
    lines = text.splitlines()
    assert lines[0] == "# vtk DataFile Version 4.2"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert f"POINTS {sol.mesh.n_vertices} double" in text
    assert f"CELL_TYPES {sol.mesh.n_triangles}" in text
    # legacy triangle cell type is 5
    idx = lines.index(f"CELL_TYPES {sol.mesh.n_triangles}")
    assert all(l == "5" for l in lines[idx + 1:idx + 1 + sol.mesh.n_triangles])


def test_vtk_self_parse_round_trip(tmp_path):
    sol = small_solution()
    path = tmp_path / "out.vtk"
    point_data, cell_data = solution_fields(sol)
    write_vtk(path, sol.mesh, point_data, cell_data)
    data = parse_vtk(path.read_text())
    np.testing.assert_allclose(data["points"][:, :2], sol.mesh.vertices)
    np.testing.assert_array_equal(data["cells"], sol.mesh.triangles)
    assert "u_h" in data["point_data"]
    assert "eta" in data["cell_data"]
    np.testing.assert_allclose(data["cell_data"]["eta"], sol.err_rep.eta)


def test_parse_vtk_rejects_malformed():
    with pytest.raises(ValueError):
        parse_vtk("not a vtk file\n")
    good = vtk_dump(small_solution().mesh)
    broken = good.replace("DATASET UNSTRUCTURED_GRID", "DATASET POLYDATA")
    with pytest.raises(ValueError):
        parse_vtk(broken)
