"""Benchmark problem registry: exact solutions, manufactured sources,
target functionals, and exact target values by high-order quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .assembly import ProblemSpec
from .goal import TargetFunctional
from .mesh import (L_SHAPE, UNIT_SQUARE, Triangulation, l_shaped_mesh,
                   structured_mesh)


@dataclass
class TestCase:
    name: str
    polygon: list
    problem: ProblemSpec
    exact_u: object = None  # callable (n,2)->(n,)
    exact_sigma: object = None  # callable (n,2)->(n,2)
    target: TargetFunctional = None
    exact_J: float = None
    params: dict = field(default_factory=dict)

    def initial_mesh(self, n_elements: int) -> Triangulation:
        if self.polygon is L_SHAPE:
            c = max(1, round(math.sqrt(n_elements / 6.0)))
            return l_shaped_mesh(cells_per_unit=c)
        nx = max(2, round(math.sqrt(n_elements / 2.0)))
        return structured_mesh(nx, nx)


def _layer(eps):
    """b(t) = t - (e^{(t-1)/eps} - e^{-1/eps}) / (1 - e^{-1/eps}); b(0)=b(1)=0;
    satisfies -eps b'' + b' = 1."""
    D = 1.0 - math.exp(-1.0 / eps)
    em = math.exp(-1.0 / eps)

    def b(t):
        return t - (np.exp((t - 1.0) / eps) - em) / D

    def db(t):
        return 1.0 - np.exp((t - 1.0) / eps) / (eps * D)

    return b, db


def _reverse_layer(eps):
    """a(t) = (1-t) - (e^{-t/eps} - e^{-1/eps}) / (1 - e^{-1/eps});
    satisfies -eps a'' - a' = 1 with a(0)=a(1)=0."""
    D = 1.0 - math.exp(-1.0 / eps)
    em = math.exp(-1.0 / eps)
    return lambda t: (1.0 - t) - (np.exp(-t / eps) - em) / D


def _bl_problem(eps):
    b, db = _layer(eps)
    u = lambda x: b(x[:, 0]) * b(x[:, 1])
    # -eps Lap u + beta.grad u = b(x) + b(y) since -eps b'' + b' = 1
    s = lambda x: b(x[:, 0]) + b(x[:, 1])
    sigma = lambda x: eps * np.column_stack(
        [db(x[:, 0]) * b(x[:, 1]), b(x[:, 0]) * db(x[:, 1])])
    prob = ProblemSpec(epsilon=eps, beta=(1.0, 1.0), source=s,
                       dirichlet=lambda x: np.zeros(len(x)))
    return prob, u, sigma, b


def boundary_layer(eps: float = 0.005) -> TestCase:
    prob, u, sigma, _ = _bl_problem(eps)
    return TestCase("boundary_layer", UNIT_SQUARE, prob, exact_u=u,
                    exact_sigma=sigma, params={"eps": eps})


def reverse_boundary_layer(eps: float = 0.005) -> TestCase:
    prob, u, sigma, b = _bl_problem(eps)
    a = _reverse_layer(eps)
    # dual exact eta_1 = a(x) a(y); j = -beta.grad eta - eps Lap eta = a(x)+a(y)
    j = lambda x: a(x[:, 0]) + a(x[:, 1])
    target = TargetFunctional(kind="volume_weighted", j_volume=j)
    iab = quad(lambda t: a(np.array([t]))[0] * b(np.array([t]))[0], 0, 1,
               epsabs=1e-14, limit=400)[0]
    ib = quad(lambda t: b(np.array([t]))[0], 0, 1, epsabs=1e-14, limit=400)[0]
    return TestCase("reverse_boundary_layer", UNIT_SQUARE, prob, exact_u=u,
                    exact_sigma=sigma, target=target, exact_J=2.0 * iab * ib,
                    params={"eps": eps})


def gaussian_peak(eps: float = 0.005, alpha: float = 1000.0,
                  xc: float = 0.99, yc: float = 0.5) -> TestCase:
    prob, u, sigma, b = _bl_problem(eps)
    j = lambda x: np.exp(-alpha * ((x[:, 0] - xc) ** 2 + (x[:, 1] - yc) ** 2))
    target = TargetFunctional(kind="volume_weighted", j_volume=j, quad_degree=30)
    jx = quad(lambda t: math.exp(-alpha * (t - xc) ** 2) * b(np.array([t]))[0],
              0, 1, epsabs=1e-16, limit=800)[0]
    jy = quad(lambda t: math.exp(-alpha * (t - yc) ** 2) * b(np.array([t]))[0],
              0, 1, epsabs=1e-16, limit=800)[0]
    return TestCase("gaussian_peak", UNIT_SQUARE, prob, exact_u=u,
                    exact_sigma=sigma, target=target, exact_J=jx * jy,
                    params={"eps": eps, "alpha": alpha, "xc": xc, "yc": yc})


def inverse_tangent(eps: float = 0.01, alpha: float = 50.0,
                    x1: float = 1.0 / 3.0, x2: float = 2.0 / 3.0) -> TestCase:
    def A(t):
        return np.arctan(alpha * (t - x1)) + np.arctan(alpha * (x2 - t))

    def dA(t):
        return (alpha / (1.0 + (alpha * (t - x1)) ** 2)
                - alpha / (1.0 + (alpha * (x2 - t)) ** 2))

    def d2A(t):
        u1 = alpha * (t - x1)
        u2 = alpha * (x2 - t)
        return -2.0 * alpha**2 * (u1 / (1.0 + u1**2) ** 2 + u2 / (1.0 + u2**2) ** 2)

    u = lambda x: A(x[:, 0]) * A(x[:, 1])
    sigma = lambda x: eps * np.column_stack(
        [dA(x[:, 0]) * A(x[:, 1]), A(x[:, 0]) * dA(x[:, 1])])

    def s(x):
        X, Y = x[:, 0], x[:, 1]
        lap = d2A(X) * A(Y) + A(X) * d2A(Y)
        adv = dA(X) * A(Y) + A(X) * dA(Y)
        return -eps * lap + adv

    prob = ProblemSpec(epsilon=eps, beta=(1.0, 1.0), source=s, dirichlet=u)
    # flux across the right boundary (side tag 2 of the unit square)
    target = TargetFunctional(kind="boundary_flux", j_boundary={2: 1.0})
    iA = quad(lambda t: A(np.array([t]))[0], 0, 1, epsabs=1e-14, limit=400)[0]
    exact_J = eps * float(dA(np.array([1.0]))[0]) * iA
    return TestCase("inverse_tangent", UNIT_SQUARE, prob, exact_u=u,
                    exact_sigma=sigma, target=target, exact_J=exact_J,
                    params={"eps": eps, "alpha": alpha, "x1": x1, "x2": x2})


def interior_line_singularity(gamma: float = 2.0, theta: float = 0.5) -> TestCase:
    def w(x):
        return x[:, 0] - theta * x[:, 1] - 0.5

    def u(x):
        ww = w(x)
        base = np.cos(np.pi * (x[:, 1] - 0.5))
        return base + np.where(ww > 0, np.abs(ww) ** gamma * 2.0**gamma, 0.0)

    def s(x):
        ww = w(x)
        sing = np.zeros(len(x))
        mask = ww > 0
        sing[mask] = (2.0**gamma * gamma * (gamma - 1.0) * (1.0 + theta**2)
                      * np.abs(ww[mask]) ** (gamma - 2.0))
        return np.pi**2 * np.cos(np.pi * (x[:, 1] - 0.5)) - sing

    def sigma(x):
        ww = w(x)
        sy = -np.pi * np.sin(np.pi * (x[:, 1] - 0.5))
        gx = np.where(ww > 0, 2.0**gamma * gamma * np.abs(ww) ** (gamma - 1.0), 0.0)
        return np.column_stack([gx, sy - theta * gx])

    prob = ProblemSpec(epsilon=1.0, beta=(0.0, 0.0), source=s, dirichlet=u)
    return TestCase("interior_line_singularity", UNIT_SQUARE, prob, exact_u=u,
                    exact_sigma=sigma, params={"gamma": gamma, "theta": theta})


def l_shaped() -> TestCase:
    def polar(x):
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.arctan2(x[:, 1], x[:, 0])
        th = np.where(th < -0.4 * np.pi, th + 2.0 * np.pi, th)
        return r, th

    def u(x):
        r, th = polar(x)
        return r ** (2.0 / 3.0) * np.sin(2.0 * th / 3.0)

    def sigma(x):
        r, th = polar(x)
        rr = np.maximum(r, 1e-300)
        dr = (2.0 / 3.0) * rr ** (-1.0 / 3.0) * np.sin(2.0 * th / 3.0)
        dth = (2.0 / 3.0) * rr ** (2.0 / 3.0) * np.cos(2.0 * th / 3.0)
        gx = dr * np.cos(th) - dth * np.sin(th) / rr
        gy = dr * np.sin(th) + dth * np.cos(th) / rr
        out = np.column_stack([gx, gy])
        out[r == 0] = 0.0
        return out

    prob = ProblemSpec(epsilon=1.0, beta=(0.0, 0.0),
                       source=lambda x: np.zeros(len(x)), dirichlet=u)
    return TestCase("l_shaped", L_SHAPE, prob, exact_u=u, exact_sigma=sigma,
                    params={})


REGISTRY = {
    "boundary_layer": boundary_layer,
    "reverse_boundary_layer": reverse_boundary_layer,
    "gaussian_peak": gaussian_peak,
    "inverse_tangent": inverse_tangent,
    "interior_line_singularity": interior_line_singularity,
    "l_shaped": l_shaped,
}


def make_case(name: str, **overrides) -> TestCase:
    if name not in REGISTRY:
        raise KeyError(f"unknown case {name!r}; choices: {sorted(REGISTRY)}")
    return REGISTRY[name](**overrides)
