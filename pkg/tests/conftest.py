import numpy as np
import pytest

from dpgadapt.mesh import Triangulation, structured_mesh


@pytest.fixture(scope="session")
def unit_square_mesh():
    return structured_mesh(4, 4)


@pytest.fixture(scope="session")
def perturbed_mesh():
    """Unstructured-looking mesh: structured grid with interior vertices
    jittered deterministically."""
    mesh = structured_mesh(5, 5)
    rng = np.random.default_rng(1234)
    verts = mesh.vertices.copy()
    interior = np.all((verts > 1e-12) & (verts < 1 - 1e-12), axis=1)
    verts[interior] += rng.uniform(-0.05, 0.05, size=(interior.sum(), 2))
    return Triangulation(verts, mesh.triangles, mesh.edges, mesh.edge_tag)
