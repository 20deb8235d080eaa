import numpy as np
import pytest

from dpgadapt.assembly import ProblemSpec, SpaceSpec
from dpgadapt.goal import (
    TargetFunctional,
    dual_rhs,
    dwr_estimate,
    eta_star_element,
    evaluate_target,
    goal_indicator,
    patch_reconstruct,
    solve_dual,
)
from dpgadapt.mesh import structured_mesh
from dpgadapt.quadrature import triangle_rule
from dpgadapt.solve import evaluate_field, solve

# Poisson problem whose adjoint for the weight j below is the polynomial
# bubble v = x(1-x)y(1-y): J(u) = (j, u) = (v, s) = 1/36 for s = 1.
J_EXACT = 1.0 / 36.0


def bubble_weight(x):
    return 2.0 * (x[:, 0] * (1.0 - x[:, 0]) + x[:, 1] * (1.0 - x[:, 1]))


def unit_source_problem():
    return ProblemSpec(epsilon=1.0, beta=(0.0, 0.0),
                       source=lambda x: np.ones(len(x)),
                       dirichlet=lambda x: np.zeros(len(x)))


def volume_target():
    return TargetFunctional(kind="volume_weighted", j_volume=bubble_weight)


def test_target_validation():
    with pytest.raises(ValueError):
        TargetFunctional(kind="pointwise", j_volume=bubble_weight)
    with pytest.raises(ValueError):
        TargetFunctional(kind="volume_weighted")
    with pytest.raises(ValueError):
        TargetFunctional(kind="volume_weighted", j_volume=bubble_weight,
                         j_boundary={1: 1.0})
    with pytest.raises(ValueError):
        TargetFunctional(kind="boundary_flux")


def test_evaluate_target_matches_direct_quadrature():
    sol = solve(structured_mesh(3, 3), unit_source_problem(),
                SpaceSpec(p=2, dp=2, norm="standard_V"))
    target = volume_target()
    pts, w = triangle_rule(20)
    uh = evaluate_field(sol, 2, pts)
    v = sol.mesh.vertices[sol.mesh.triangles]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    xy = v[:, 0][:, None, :] + np.einsum("eij,qj->eqi", jac, pts)
    jvals = bubble_weight(xy.reshape(-1, 2)).reshape(uh.shape)
    direct = float(np.sum(2.0 * sol.mesh.areas[:, None] * w * uh * jvals))
    assert evaluate_target(sol, target) == pytest.approx(direct, rel=1e-12)


def test_boundary_flux_exact_for_polynomial():
    # u = x^2 (1+y): outward fluxes are 3 (right), -1/3 (bottom), 1/3 (top),
    # 0 (left); exact at p=3 where the primal solve is polynomial-exact
    u = lambda x: x[:, 0] ** 2 * (1.0 + x[:, 1])
    prob = ProblemSpec(epsilon=1.0, beta=(0.0, 0.0),
                       source=lambda x: -2.0 * (1.0 + x[:, 1]), dirichlet=u)
    sol = solve(structured_mesh(4, 4), prob,
                SpaceSpec(p=3, dp=2, norm="standard_V"))
    expected = {1: -1.0 / 3.0, 2: 3.0, 3: 1.0 / 3.0, 4: 0.0}
    for tag, val in expected.items():
        target = TargetFunctional(kind="boundary_flux", j_boundary={tag: 1.0})
        assert evaluate_target(sol, target) == pytest.approx(val, abs=1e-9)
    both = TargetFunctional(kind="boundary_flux", j_boundary={1: 2.0, 2: -1.0})
    assert evaluate_target(sol, both) == pytest.approx(-2.0 / 3.0 - 3.0,
                                                       abs=1e-9)


def test_dual_rhs_vanishes_off_field_blocks():
    sol = solve(structured_mesh(3, 3), unit_source_problem(),
                SpaceSpec(p=1, dp=2, norm="standard_V"))
    rhs = dual_rhs(sol, volume_target())
    layout = sol.system.ls.layout
    n = sol.system.ls.sd.n
    # volume weight loads only the u block of each element
    field = np.zeros(layout.n_total, dtype=bool)
    for k in range(sol.mesh.n_triangles):
        field[3 * n * k + 2 * n:3 * n * (k + 1)] = True
    assert np.any(rhs[field] != 0.0)
    assert np.all(rhs[~field] == 0.0)


def test_dwr_tracks_true_goal_error():
    # with a smooth adjoint the reconstructed dual-weighted residual should
    # approximate the actual target error closely on both meshes
    prob, target = unit_source_problem(), volume_target()
    errs, dwrs, etas = [], [], []
    for nx in (4, 8):
        sol = solve(structured_mesh(nx, nx), prob,
                    SpaceSpec(p=2, dp=2, norm="standard_V"))
        dual = solve_dual(sol, target)
        errs.append(abs(evaluate_target(sol, target) - J_EXACT))
        dwrs.append(dwr_estimate(sol, patch_reconstruct(sol, dual)))
        etas.append(np.sqrt(np.sum(eta_star_element(sol, dual) ** 2)))
    for err, dwr in zip(errs, dwrs):
        assert 0.5 * err < dwr < 2.0 * err
    # goal superconvergence: J error drops much faster than the O(h) dual
    # residual under uniform refinement
    assert errs[1] < errs[0] / 8.0
    assert etas[1] < etas[0] / 2.5


def test_eta_star_small_when_adjoint_resolved():
    # the adjoint bubble pair lies in the p=4 trial space, so the dual
    # residual collapses by orders of magnitude relative to p=1
    prob, target = unit_source_problem(), volume_target()
    res = {}
    for p in (1, 4):
        sol = solve(structured_mesh(4, 4), prob,
                    SpaceSpec(p=p, dp=2, norm="standard_V"))
        dual = solve_dual(sol, target)
        res[p] = np.max(eta_star_element(sol, dual))
    assert res[4] < 1e-4 * res[1]


def test_patch_reconstruct_reproduces_global_polynomial():
    # dual values sampled from one global polynomial pair of enriched degree
    # must be refit exactly by the least-squares patch smoother
    sol = solve(structured_mesh(3, 3), unit_source_problem(),
                SpaceSpec(p=1, dp=2, norm="standard_V"))
    sd, mesh = sol.system.ls.sd, sol.mesh
    m = sd.m
    polys = (lambda x: x[:, 0] ** 3 - 2.0 * x[:, 1] ** 2,
             lambda x: x[:, 0] * x[:, 1] + 1.0,
             lambda x: (x[:, 0] + x[:, 1]) ** 3)
    v = mesh.vertices[mesh.triangles]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    xy = v[:, 0][:, None, :] + np.einsum("eij,qj->eqi", jac, sd.vol_pts)
    sq = np.sqrt(2.0 * mesh.areas)
    z = np.empty((mesh.n_triangles, 3 * m))
    for c, poly in enumerate(polys):
        vals = poly(xy.reshape(-1, 2)).reshape(mesh.n_triangles, -1)
        z[:, c * m:(c + 1) * m] = sq[:, None] * np.einsum(
            "q,eq,qm->em", sd.vol_w, vals, sd.phi_test)
    dual = solve_dual(sol, volume_target())
    dual.z = z
    out = patch_reconstruct(sol, dual)
    np.testing.assert_allclose(out, z, rtol=1e-8, atol=1e-10)


def test_dwr_estimate_is_absolute_residual_pairing():
    sol = solve(structured_mesh(3, 3), unit_source_problem(),
                SpaceSpec(p=1, dp=2, norm="standard_V"))
    rng = np.random.default_rng(7)
    recon = rng.standard_normal(sol.err_rep.residual.shape)
    expected = abs(float(np.sum(sol.err_rep.residual * recon)))
    assert dwr_estimate(sol, recon) == pytest.approx(expected, rel=1e-14)
    assert dwr_estimate(sol, -recon) == pytest.approx(expected, rel=1e-14)


def test_goal_indicator_is_product_of_estimators():
    sol = solve(structured_mesh(3, 3), unit_source_problem(),
                SpaceSpec(p=1, dp=2, norm="standard_V"))
    dual = solve_dual(sol, volume_target())
    expected = eta_star_element(sol, dual) * sol.err_rep.eta
    np.testing.assert_allclose(goal_indicator(sol, dual), expected, rtol=1e-14)
