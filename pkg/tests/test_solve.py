import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpgadapt.assembly import ProblemSpec, SpaceSpec
from dpgadapt.solve import condition_estimate, l2_error, solve


def poly_problem(coeffs, p):
    """Poisson problem whose exact solution is the polynomial with the given
    total-degree-p coefficients (constant + x,y,... ordering)."""
    from dpgadapt.polys import monomial_exponents

    exps = monomial_exponents(p)

    def u(pts):
        pts = np.atleast_2d(pts)
        return sum(c * pts[:, 0] ** a * pts[:, 1] ** b
                   for c, (a, b) in zip(coeffs, exps))

    def lap(pts):
        pts = np.atleast_2d(pts)
        out = np.zeros(len(pts))
        for c, (a, b) in zip(coeffs, exps):
            if a >= 2:
                out += c * a * (a - 1) * pts[:, 0] ** (a - 2) * pts[:, 1] ** b
            if b >= 2:
                out += c * b * (b - 1) * pts[:, 0] ** a * pts[:, 1] ** (b - 2)
        return out

    return ProblemSpec(epsilon=1.0, beta=(0.0, 0.0),
                       source=lambda pts: -lap(pts), dirichlet=u), u


@pytest.mark.parametrize("p", [1, 2, 3])
@given(data=st.data())
@settings(max_examples=5, deadline=None)
def test_polynomial_exactness(p, data, perturbed_mesh):
    n = (p + 1) * (p + 2) // 2
    coeffs = [data.draw(st.floats(-2, 2)) for _ in range(n)]
    problem, u = poly_problem(coeffs, p)
    sol = solve(perturbed_mesh, problem, SpaceSpec(p=p, dp=2))
    assert l2_error(sol, u, comp=2) < 1e-9
    assert np.all(sol.err_rep.eta < 1e-9)


def test_energy_identity(perturbed_mesh):
    problem, _ = poly_problem([0.0, 1.0, 2.0, 3.0, -1.0, 0.5, 0.2, 0.1,
                               -0.3, 0.4], 3)
    sol = solve(perturbed_mesh, problem, SpaceSpec(p=2, dp=2))
    assert sol.energy_error == pytest.approx(
        np.sqrt(np.sum(sol.err_rep.eta ** 2)), rel=1e-12)
    assert sol.energy_error == pytest.approx(sol.err_rep.total, rel=1e-12)


def test_normal_vs_dls(perturbed_mesh):
    problem = ProblemSpec(
        epsilon=0.5, beta=(1.0, 0.25),
        source=lambda pts: np.sin(3 * pts[:, 0]) * pts[:, 1],
        dirichlet=lambda pts: np.zeros(len(pts)))
    space = SpaceSpec(p=2, dp=2)
    a = solve(perturbed_mesh, problem, space, method="normal")
    b = solve(perturbed_mesh, problem, space, method="dls")
    scale = np.max(np.abs(a.x))
    assert np.max(np.abs(a.x - b.x)) / scale < 1e-8
    assert a.energy_error == pytest.approx(b.energy_error, rel=1e-6)


def test_condition_estimates(perturbed_mesh):
    problem = ProblemSpec(
        epsilon=1.0, beta=(0.0, 0.0),
        source=lambda pts: np.ones(len(pts)),
        dirichlet=lambda pts: np.zeros(len(pts)))
    sol = solve(perturbed_mesh, problem, SpaceSpec(p=1, dp=2))
    cn, _ = condition_estimate(sol.system, "normal")
    cd, _ = condition_estimate(sol.system, "dls")
    assert cn > 1 and cd > 1
    # cond of the least-squares operator is the square root of the normal one
    assert np.log10(cd) == pytest.approx(0.5 * np.log10(cn), abs=0.3)


def test_both_norms_run(unit_square_mesh):
    problem = ProblemSpec(
        epsilon=1.0, beta=(0.0, 0.0),
        source=lambda pts: np.ones(len(pts)),
        dirichlet=lambda pts: np.zeros(len(pts)))
    for norm in ("standard_V", "scaled_V"):
        sol = solve(unit_square_mesh, problem, SpaceSpec(p=1, dp=2, norm=norm))
        assert np.isfinite(sol.energy_error)
        assert sol.energy_error > 0
