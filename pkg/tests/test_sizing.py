import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpgadapt.mesh import structured_mesh
from dpgadapt.sizing import (ALPHA, SizingError, abar, build_plan,
                             equidistributed_error, optimal_density,
                             predicted_error, regularize)


@given(st.integers(1, 3), st.floats(10, 1e4),
       st.lists(st.floats(1e-8, 1e2), min_size=3, max_size=20))
@settings(max_examples=100, deadline=None)
def test_density_conserves_complexity(p, N, etas):
    eta = np.array(etas)
    rng = np.random.default_rng(0)
    areas = rng.uniform(0.01, 1.0, len(eta))
    d = optimal_density(eta, areas, N, p)
    assert np.sum(d * areas) == pytest.approx(N, rel=1e-10)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_equidistribution_identity(p):
    # at the optimal density every element contributes the same local error:
    # abar_K * (1/d_K)^{p+2} is constant and equals the target
    rng = np.random.default_rng(1)
    eta = 10 ** rng.uniform(-4, -1, 12)
    areas = rng.uniform(0.01, 0.2, 12)
    N = 500.0
    d = optimal_density(eta, areas, N, p)
    contrib = abar(eta, areas, p) * d ** (-(p + 2))
    np.testing.assert_allclose(contrib, contrib[0], rtol=1e-12)


@pytest.mark.parametrize("p", [1, 2])
def test_predicted_error_matches_lagrange_oracle(p):
    """Minimize sum abar_K lambda_K^{p+1} |K| subject to sum |K|/lambda_K = N
    numerically and compare with the closed forms (continuous-mesh model
    with unit-element area alpha)."""
    from scipy.optimize import minimize

    rng = np.random.default_rng(2)
    ne = 10
    eta = 10 ** rng.uniform(-3, -1, ne)
    areas = rng.uniform(0.05, 0.15, ne)
    N = 300.0
    a = abar(eta, areas, p)

    def err2(loglam):
        lam = np.exp(loglam)
        return float(np.sum(a * (ALPHA * lam) ** (p + 2) / ALPHA * areas / lam))

    def cons(loglam):
        return float(np.sum(areas / np.exp(loglam))) - N

    x0 = np.log(np.full(ne, areas.sum() / N))
    res = minimize(err2, x0, constraints=[{"type": "eq", "fun": cons}],
                   method="SLSQP", options={"maxiter": 500, "ftol": 1e-16})
    assert res.success
    numeric = np.sqrt(res.fun)
    closed = predicted_error(eta, N, p)
    assert numeric == pytest.approx(closed, rel=5e-3)
    # and the optimizer's density matches d* = 1/lambda
    d_star = optimal_density(eta, areas, N, p)
    np.testing.assert_allclose(1.0 / np.exp(res.x), d_star, rtol=5e-3)


def test_regularize_floors_small_indicators():
    eta = np.array([1e-9, 1e-3, 2e-3])
    out = regularize(eta, 100.0, 1)
    floor = 0.1 * equidistributed_error(eta, 100.0, 1)
    assert out[0] == pytest.approx(floor)
    assert out[1] == 1e-3 or out[1] == pytest.approx(max(1e-3, floor))
    assert np.all(out >= eta)


def test_optimal_density_validation():
    with pytest.raises(SizingError):
        optimal_density(np.ones(3), np.ones(2), 10.0, 1)
    with pytest.raises(SizingError):
        optimal_density(np.ones(3), np.ones(3), -1.0, 1)


def test_zero_indicators_give_uniform_density():
    areas = np.array([0.25, 0.25, 0.5])
    d = optimal_density(np.zeros(3), areas, 40.0, 1)
    np.testing.assert_allclose(d, 40.0, rtol=1e-12)


def test_build_plan_budget_and_trust_region():
    mesh = structured_mesh(4, 4)
    ne = mesh.n_triangles
    rng = np.random.default_rng(3)
    eta = 10 ** rng.uniform(-5, -1, ne)
    beta = 1 + 10 ** rng.uniform(0, 2, ne)
    phi = rng.uniform(0, np.pi, ne)
    N = 200.0
    plan = build_plan(mesh, eta, beta, phi, N, 2)
    assert plan.complexity == pytest.approx(N, rel=1e-10)
    from dpgadapt.metric import decompose_array, implied_metric

    d_imp, b_imp, _ = decompose_array(
        implied_metric(mesh.vertices[mesh.triangles]))
    # trust region: no element jumps more than the step bounds before the
    # final budget rescale (allow the rescale factor)
    rescale = N / np.sum(np.clip(
        optimal_density(eta, mesh.areas, N, 2), 0, None) * mesh.areas)
    assert np.all(plan.beta <= b_imp * 4.0 + 1e-9)
    assert np.all(plan.density <= d_imp * 16.0 * 1.5)
    # per-vertex export exists and is SPD
    assert plan.vertex_tensors.shape == (mesh.n_vertices, 3)
    det = (plan.vertex_tensors[:, 0] * plan.vertex_tensors[:, 2]
           - plan.vertex_tensors[:, 1] ** 2)
    assert np.all(det > 0)


def test_build_plan_without_trust_region():
    mesh = structured_mesh(3, 3)
    ne = mesh.n_triangles
    eta = np.linspace(1e-4, 1e-2, ne)
    plan = build_plan(mesh, eta, np.ones(ne), np.zeros(ne), 64.0, 1,
                      step_density=None, step_coarsen=None, step_aspect=None)
    assert plan.complexity == pytest.approx(64.0, rel=1e-10)
    d = optimal_density(eta, mesh.areas, 64.0, 1)
    np.testing.assert_allclose(plan.density, d, rtol=1e-10)
