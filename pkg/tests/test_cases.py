import numpy as np
import pytest
from scipy.integrate import quad

from dpgadapt.cases import REGISTRY, make_case

FD_H = 1e-5


def _fd_operator(case, pts, h):
    """-eps lap(u) + div(beta u) via centered finite differences of step h."""
    u = case.exact_u
    eps = case.problem.epsilon
    bx, by = case.problem.beta
    lap = (u(pts + [h, 0]) + u(pts - [h, 0]) + u(pts + [0, h])
           + u(pts - [0, h]) - 4 * u(pts)) / h ** 2
    ux = (u(pts + [h, 0]) - u(pts - [h, 0])) / (2 * h)
    uy = (u(pts + [0, h]) - u(pts - [0, h])) / (2 * h)
    return -eps * lap + bx * ux + by * uy


def fd_residual(case, pts, h=FD_H):
    """-eps lap(u) + div(beta u) - s, with the O(h^2) truncation term of the
    centered stencil cancelled by Richardson extrapolation (steps h and 2h);
    needed near boundary layers where fourth derivatives scale like eps^-4."""
    r1 = _fd_operator(case, pts, h)
    r2 = _fd_operator(case, pts, 2 * h)
    return (4.0 * r1 - r2) / 3.0 - case.problem.source(pts)


CASES_WITH_EXACT_U = [name for name in sorted(REGISTRY)
                      if make_case(name).exact_u is not None]


@pytest.mark.parametrize("name", CASES_WITH_EXACT_U)
def test_manufactured_source(name):
    case = make_case(name)
    rng = np.random.default_rng(99)
    lo, hi = 4 * FD_H, 1 - 4 * FD_H
    if name == "l_shaped":
        # domain is [-1,1]^2 minus the bottom-right unit square; sample the
        # left column and the top-right square, away from the corner at 0
        pts = rng.uniform(lo, hi, size=(2000, 2))
        pts[:1000, 0] -= 1.0
        pts[:500, 1] -= 1.0
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) > 0.05]
    else:
        pts = rng.uniform(lo, hi, size=(1000, 2))
    if name == "interior_line_singularity":
        # keep the 2h stencil clear of the kink line w = x - y/2 - 1/2 = 0
        w = pts[:, 0] - 0.5 * pts[:, 1] - 0.5
        pts = pts[np.abs(w) > 0.01]
    # the layer cases need a small step to resolve eps-scale truncation; the
    # eps=1 cases need a larger one to keep -eps*lap cancellation noise small
    h = FD_H if case.problem.epsilon < 0.1 else 1e-4
    resid = fd_residual(case, pts, h)
    scale = max(1.0, np.max(np.abs(case.problem.source(pts))))
    assert np.max(np.abs(resid)) / scale < 1e-6


@pytest.mark.parametrize("name", CASES_WITH_EXACT_U)
def test_exact_sigma_is_eps_grad_u(name):
    case = make_case(name)
    if case.exact_sigma is None:
        pytest.skip("no closed-form flux")
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.1, 0.9, size=(200, 2))
    if name == "l_shaped":
        pts[:100, 0] -= 1.0
    u = case.exact_u
    gx = (u(pts + [FD_H, 0]) - u(pts - [FD_H, 0])) / (2 * FD_H)
    gy = (u(pts + [0, FD_H]) - u(pts - [0, FD_H])) / (2 * FD_H)
    sig = case.exact_sigma(pts)
    eps = case.problem.epsilon
    np.testing.assert_allclose(sig[:, 0], eps * gx, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(sig[:, 1], eps * gy, rtol=1e-5, atol=1e-9)


def test_reverse_boundary_layer_exact_J():
    case = make_case("reverse_boundary_layer")
    eps = case.problem.epsilon

    def b(t):
        return t - (np.exp((t - 1) / eps) - np.exp(-1 / eps)) / (1 - np.exp(-1 / eps))

    def a(t):
        return (1 - t) - (np.exp(-t / eps) - np.exp(-1 / eps)) / (1 - np.exp(-1 / eps))

    iab = quad(lambda t: a(t) * b(t), 0, 1, epsabs=1e-14)[0]
    ib = quad(b, 0, 1, epsabs=1e-14)[0]
    # j = a(x) + a(y), u = b(x) b(y): J = 2 * int(ab) * int(b)
    assert case.exact_J == pytest.approx(2 * iab * ib, rel=1e-12)


def test_gaussian_peak_exact_J():
    case = make_case("gaussian_peak")
    jx = quad(lambda t: np.exp(-1000 * (t - 0.99) ** 2)
              * (t - (np.exp((t - 1) / 0.005) - np.exp(-1 / 0.005))
                 / (1 - np.exp(-1 / 0.005))), 0, 1, epsabs=1e-16,
              points=[0.99])[0]
    jy = quad(lambda t: np.exp(-1000 * (t - 0.5) ** 2)
              * (t - (np.exp((t - 1) / 0.005) - np.exp(-1 / 0.005))
                 / (1 - np.exp(-1 / 0.005))), 0, 1, epsabs=1e-16,
              points=[0.5])[0]
    assert case.exact_J == pytest.approx(jx * jy, rel=1e-10)


def test_inverse_tangent_exact_J():
    case = make_case("inverse_tangent")
    eps = case.problem.epsilon

    def A(t):
        return np.arctan(50 * (t - 1 / 3)) + np.arctan(50 * (2 / 3 - t))

    dA1 = 50 / (1 + (50 * (1 - 1 / 3)) ** 2) - 50 / (1 + (50 * (2 / 3 - 1)) ** 2)
    iA = quad(A, 0, 1, epsabs=1e-14)[0]
    assert case.exact_J == pytest.approx(eps * dA1 * iA, rel=1e-10)


def test_initial_meshes():
    for name in sorted(REGISTRY):
        case = make_case(name)
        mesh = case.initial_mesh(32 if name != "l_shaped" else 24)
        assert mesh.n_triangles >= 8
        assert np.all(mesh.areas > 0)


def test_case_overrides():
    case = make_case("interior_line_singularity", gamma=3.5)
    assert case.params["gamma"] == 3.5
