"""Hot numerical kernels with a numba fast path and a pure-numpy fallback.

Set DPGADAPT_NO_NUMBA=1 to force the numpy implementations (useful for
debugging and for the kernel benchmark).
"""

from __future__ import annotations

import math
import os

import numpy as np

_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)
N_THETA = 64
_THETA = 2.0 * np.pi * np.arange(N_THETA) / N_THETA
_DTHETA = 2.0 * np.pi / N_THETA


def _objective_np(beta, phi, A, rho, phi_i, order, lam):
    """Anisotropy bound Gbar, vectorized over elements.

    beta, phi, lam: (ne,); A, rho, phi_i: (ne, nc); order: (nc,) even ints.
    Inactive components carry A = 0.
    """
    delta = phi[:, None] - phi_i  # (ne, nc)
    rh = rho ** (-2.0 / order[None, :])
    c, s = np.cos(delta), np.sin(delta)
    g11 = beta[:, None] * (c * c + rh * s * s)
    g12 = -s * c * (1.0 - rh)
    g22 = (s * s + rh * c * c) / beta[:, None]
    ct, st = np.cos(_THETA), np.sin(_THETA)
    g = (g11[:, :, None] * (ct * ct)[None, None, :]
         + g22[:, :, None] * (st * st)[None, None, :]
         + 2.0 * g12[:, :, None] * (st * ct)[None, None, :])
    integ = np.power(np.maximum(g, 0.0), 0.5 * order[None, :, None]).sum(-1) * _DTHETA
    coef = A * lam[:, None] ** (0.5 * (order[None, :] + 2.0)) / (order[None, :] + 2.0)
    return (coef * integ).sum(-1)


def _golden_np(f, a, b, tol, iters=80):
    """Vectorized golden-section minimization over [a, b] per element."""
    for _ in range(iters):
        if np.all(b - a < tol):
            break
        x1 = b - _GOLD * (b - a)
        x2 = a + _GOLD * (b - a)
        take = f(x1) > f(x2)  # minimum in [x1, b]
        a = np.where(take, x1, a)
        b = np.where(take, b, x2)
    xm = 0.5 * (a + b)
    return xm, f(xm)


def anisotropy_search_np(A, rho, phi_i, order, lam, beta_max=100.0,
                         tol=1e-6, max_outer=50):
    """Alternate golden-section search in beta then phi for every element."""
    ne = A.shape[0]
    beta = np.ones(ne)
    phi = np.zeros(ne)
    # seed phi from the strongest component's preferred direction
    if A.size:
        kbest = np.argmax(A, axis=1)
        phi = (phi_i[np.arange(ne), kbest] + 0.5 * np.pi) % np.pi
    for _ in range(max_outer):
        b_old, p_old = beta.copy(), phi.copy()
        beta, _ = _golden_np(
            lambda b: _objective_np(b, phi, A, rho, phi_i, order, lam),
            np.ones(ne), np.full(ne, beta_max), tol)
        lo = phi - 0.5 * np.pi
        phi, _ = _golden_np(
            lambda p: _objective_np(beta, p, A, rho, phi_i, order, lam),
            lo, lo + np.pi, tol)
        if np.max(np.abs(beta - b_old)) < tol and np.max(np.abs(phi - p_old)) < tol:
            break
    phi = np.mod(phi, np.pi)
    gbar = _objective_np(beta, phi, A, rho, phi_i, order, lam)
    return beta, phi, gbar


_USE_NUMBA = os.environ.get("DPGADAPT_NO_NUMBA", "0") != "1"

if _USE_NUMBA:
    try:
        import numba
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        _USE_NUMBA = False

if _USE_NUMBA:

    @njit(cache=True)
    def _objective_one(beta, phi, A, rho, phi_i, order, lam):
        total = 0.0
        nc = A.shape[0]
        for j in range(nc):
            if A[j] == 0.0:
                continue
            i = order[j]
            rh = rho[j] ** (-2.0 / i)
            d = phi - phi_i[j]
            c = math.cos(d)
            s = math.sin(d)
            g11 = beta * (c * c + rh * s * s)
            g12 = -s * c * (1.0 - rh)
            g22 = (s * s + rh * c * c) / beta
            acc = 0.0
            for t in range(N_THETA):
                th = 2.0 * math.pi * t / N_THETA
                ct = math.cos(th)
                st = math.sin(th)
                g = g11 * ct * ct + g22 * st * st + 2.0 * g12 * st * ct
                if g < 0.0:
                    g = 0.0
                acc += g ** (0.5 * i)
            integ = acc * (2.0 * math.pi / N_THETA)
            total += A[j] * lam ** (0.5 * (i + 2.0)) / (i + 2.0) * integ
        return total

    @njit(cache=True)
    def _golden_beta(phi, A, rho, phi_i, order, lam, a, b, tol):
        x1 = b - _GOLD * (b - a)
        x2 = a + _GOLD * (b - a)
        f1 = _objective_one(x1, phi, A, rho, phi_i, order, lam)
        f2 = _objective_one(x2, phi, A, rho, phi_i, order, lam)
        while b - a > tol:
            if f1 > f2:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLD * (b - a)
                f2 = _objective_one(x2, phi, A, rho, phi_i, order, lam)
            else:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLD * (b - a)
                f1 = _objective_one(x1, phi, A, rho, phi_i, order, lam)
        return 0.5 * (a + b)

    @njit(cache=True)
    def _golden_phi(beta, A, rho, phi_i, order, lam, a, b, tol):
        x1 = b - _GOLD * (b - a)
        x2 = a + _GOLD * (b - a)
        f1 = _objective_one(beta, x1, A, rho, phi_i, order, lam)
        f2 = _objective_one(beta, x2, A, rho, phi_i, order, lam)
        while b - a > tol:
            if f1 > f2:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLD * (b - a)
                f2 = _objective_one(beta, x2, A, rho, phi_i, order, lam)
            else:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLD * (b - a)
                f1 = _objective_one(beta, x1, A, rho, phi_i, order, lam)
        return 0.5 * (a + b)

    @njit(parallel=True, cache=True)
    def _search_nb(A, rho, phi_i, order, lam, beta_max, tol, max_outer):
        ne = A.shape[0]
        beta_out = np.ones(ne)
        phi_out = np.zeros(ne)
        gbar_out = np.zeros(ne)
        for e in prange(ne):
            beta = 1.0
            kbest = 0
            amax = 0.0
            for j in range(A.shape[1]):
                if A[e, j] > amax:
                    amax = A[e, j]
                    kbest = j
            phi = (phi_i[e, kbest] + 0.5 * math.pi) % math.pi
            for _ in range(max_outer):
                b_old = beta
                p_old = phi
                beta = _golden_beta(phi, A[e], rho[e], phi_i[e], order, lam[e],
                                    1.0, beta_max, tol)
                phi = _golden_phi(beta, A[e], rho[e], phi_i[e], order, lam[e],
                                  phi - 0.5 * math.pi, phi + 0.5 * math.pi, tol)
                if abs(beta - b_old) < tol and abs(phi - p_old) < tol:
                    break
            phi = phi % math.pi
            beta_out[e] = beta
            phi_out[e] = phi
            gbar_out[e] = _objective_one(beta, phi, A[e], rho[e], phi_i[e],
                                         order, lam[e])
        return beta_out, phi_out, gbar_out

    def anisotropy_search(A, rho, phi_i, order, lam, beta_max=100.0,
                          tol=1e-6, max_outer=50):
        return _search_nb(
            np.ascontiguousarray(A), np.ascontiguousarray(rho),
            np.ascontiguousarray(phi_i), order.astype(np.float64),
            np.ascontiguousarray(lam), beta_max, tol, max_outer)

    BACKEND = "numba"
else:

    def anisotropy_search(A, rho, phi_i, order, lam, beta_max=100.0,
                          tol=1e-6, max_outer=50):
        return anisotropy_search_np(A, rho, phi_i, order.astype(np.float64),
                                    lam, beta_max, tol, max_outer)

    BACKEND = "numpy"


def objective(beta, phi, A, rho, phi_i, order, lam):
    """Gbar for scalar or array (beta, phi); reference numpy path."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    return _objective_np(beta, phi, np.atleast_2d(A), np.atleast_2d(rho),
                         np.atleast_2d(phi_i), np.asarray(order, dtype=float),
                         np.atleast_1d(lam))
