import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpgadapt.metric import (UNIT_EDGE_SQ, ConstantField, MetricError,
                             MetricField, compose_array, decompose_array,
                             implied_metric, metric_compose, metric_decompose,
                             metric_exp, metric_log, read_metric,
                             riemannian_edge_length, riemannian_edge_lengths,
                             vertex_metric_from_elements, write_metric)
from dpgadapt.mesh import structured_mesh

densities = st.floats(1e-3, 1e6)
aspects = st.floats(1.0, 1e4)
angles = st.floats(0.0, np.pi, exclude_max=True)


@given(densities, st.floats(1.0, 100.0), angles)
@settings(max_examples=200, deadline=None)
def test_compose_decompose_round_trip_tight(d, b, phi):
    m = metric_compose(density=d, aspect_ratio=b, orientation=phi)
    dec = metric_decompose(m)
    assert dec.density == pytest.approx(d, rel=1e-12)
    assert dec.aspect_ratio == pytest.approx(b, rel=1e-10)
    if b > 1 + 1e-6:
        diff = abs(dec.orientation - phi) % np.pi
        assert min(diff, np.pi - diff) < 1e-7


@given(densities, aspects, angles)
@settings(max_examples=200, deadline=None)
def test_compose_decompose_round_trip_extreme(d, b, phi):
    # eigen-splitting loses digits quadratically in the aspect ratio, so the
    # tolerance is looser for strongly anisotropic tensors
    m = metric_compose(density=d, aspect_ratio=b, orientation=phi)
    dec = metric_decompose(m)
    assert dec.density == pytest.approx(d, rel=1e-7)
    assert dec.aspect_ratio == pytest.approx(b, rel=1e-5)
    if b > 1 + 1e-6:
        diff = abs(dec.orientation - phi) % np.pi
        assert min(diff, np.pi - diff) < 1e-6


def test_decompose_array_matches_scalar():
    rng = np.random.default_rng(3)
    d = 10.0 ** rng.uniform(-2, 4, 50)
    b = 10.0 ** rng.uniform(0, 3, 50)
    phi = rng.uniform(0, np.pi, 50)
    tensors = compose_array(d, b, phi)
    dd, bb, pp = decompose_array(tensors)
    np.testing.assert_allclose(dd, d, rtol=1e-10)
    np.testing.assert_allclose(bb, b, rtol=1e-8)
    diff = np.abs(pp - phi) % np.pi
    np.testing.assert_allclose(np.minimum(diff, np.pi - diff), 0, atol=1e-6)


def test_implied_metric_unit_edges():
    rng = np.random.default_rng(5)
    ne = 40
    tri = rng.normal(size=(ne, 3, 2))
    areas = 0.5 * np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = areas < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    m = implied_metric(tri)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        e = tri[:, b] - tri[:, a]
        q = (m[:, 0] * e[:, 0] ** 2 + 2 * m[:, 1] * e[:, 0] * e[:, 1]
             + m[:, 2] * e[:, 1] ** 2)
        np.testing.assert_allclose(q, UNIT_EDGE_SQ, rtol=1e-10)


def test_log_exp_round_trip():
    rng = np.random.default_rng(9)
    d = 10.0 ** rng.uniform(-3, 3, 30)
    b = 10.0 ** rng.uniform(0, 2, 30)
    phi = rng.uniform(0, np.pi, 30)
    m = compose_array(d, b, phi)
    np.testing.assert_allclose(metric_exp(metric_log(m)), m, rtol=1e-10)


def test_non_spd_rejected():
    with pytest.raises(MetricError):
        metric_log(np.array([[1.0, 2.0, 1.0]]))  # indefinite


def test_constant_field_interpolation():
    mesh = structured_mesh(3, 3)
    t = np.array([4.0, 0.5, 2.0])
    field = MetricField(mesh, np.tile(t, (mesh.n_vertices, 1)))
    pts = np.array([[0.3, 0.7], [0.05, 0.05], [0.999, 0.2]])
    np.testing.assert_allclose(field.evaluate(pts), np.tile(t, (3, 1)),
                               rtol=1e-12)


def test_riemannian_length_identity_metric():
    field = ConstantField(np.array([1.0, 0.0, 1.0]))
    x1 = np.array([[0.0, 0.0], [0.2, 0.1]])
    x2 = np.array([[1.0, 0.0], [0.2, 0.9]])
    expect = np.linalg.norm(x2 - x1, axis=1)
    np.testing.assert_allclose(riemannian_edge_lengths(field, x1, x2),
                               expect, rtol=1e-12)
    assert riemannian_edge_length(field, x1[0], x2[0]) == \
        pytest.approx(1.0, rel=1e-12)


def test_vertex_metric_constant_preserved():
    mesh = structured_mesh(3, 3)
    t = np.array([2.0, 0.3, 5.0])
    elem = np.tile(t, (mesh.n_triangles, 1))
    vert = vertex_metric_from_elements(mesh, elem)
    np.testing.assert_allclose(vert, np.tile(t, (mesh.n_vertices, 1)),
                               rtol=1e-10)


def test_metric_io_round_trip(tmp_path):
    mesh = structured_mesh(3, 3)
    rng = np.random.default_rng(2)
    tensors = compose_array(10.0 ** rng.uniform(0, 2, mesh.n_vertices),
                            10.0 ** rng.uniform(0, 1, mesh.n_vertices),
                            rng.uniform(0, np.pi, mesh.n_vertices))
    field = MetricField(mesh, tensors)
    path = tmp_path / "metric.sol"
    write_metric(field, path)
    back = read_metric(mesh, path)
    np.testing.assert_allclose(back.tensors, tensors, rtol=1e-10)
