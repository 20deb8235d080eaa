"""Bivariate monomial machinery on the reference triangle.

All element-local polynomials are expressed in monomials of the centered
reference coordinates yhat = xhat - (1/3, 1/3), where xhat lives on the
reference triangle.  Working in reference coordinates keeps Vandermonde and
moment matrices identical for every element regardless of its physical
anisotropy, so orthonormalization is done once per order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .quadrature import triangle_rule

REF_CENTROID = np.array([1.0 / 3.0, 1.0 / 3.0])


def monomial_exponents(degree: int) -> np.ndarray:
    """(nmono, 2) integer exponents, graded by total degree."""
    exps = []
    for d in range(degree + 1):
        for ix in range(d, -1, -1):
            exps.append((ix, d - ix))
    return np.array(exps, dtype=np.int64)


def n_monomials(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def monomial_values(exps: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vandermonde (npts, nmono) of centered monomials at reference points."""
    y = pts - REF_CENTROID
    return y[:, 0, None] ** exps[:, 0] * y[:, 1, None] ** exps[:, 1]


def derivative_matrices(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices Dx, Dy with (Dx @ c) the coefficients of d/dyhat1 of c."""
    exps = monomial_exponents(degree)
    index = {tuple(e): i for i, e in enumerate(exps)}
    n = len(exps)
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for a, (ix, iy) in enumerate(exps):
        if ix > 0:
            dx[index[(ix - 1, iy)], a] = ix
        if iy > 0:
            dy[index[(ix, iy - 1)], a] = iy
    return dx, dy


def product_index(deg1: int, deg2: int) -> np.ndarray:
    """(nmono1, nmono2) table mapping monomial pairs to their product index."""
    e1 = monomial_exponents(deg1)
    e2 = monomial_exponents(deg2)
    target = monomial_exponents(deg1 + deg2)
    index = {tuple(e): i for i, e in enumerate(target)}
    tab = np.empty((len(e1), len(e2)), dtype=np.int64)
    for a, ea in enumerate(e1):
        for b, eb in enumerate(e2):
            tab[a, b] = index[(ea[0] + eb[0], ea[1] + eb[1])]
    return tab


def poly_mul_batch(c1: np.ndarray, c2: np.ndarray, tab: np.ndarray, nout: int) -> np.ndarray:
    """Batched polynomial product: (ne, n1), (ne, n2) -> (ne, nout)."""
    outer = c1[:, :, None] * c2[:, None, :]
    out = np.zeros((c1.shape[0], nout))
    np.add.at(out, (slice(None), tab.ravel()), outer.reshape(c1.shape[0], -1))
    return out


@dataclass(frozen=True)
class ReferenceBasis:
    """L2-orthonormal polynomial basis on the reference triangle.

    Columns of ``coeff`` expand each basis function in centered monomials;
    the basis is orthonormal in the reference L2 inner product, so on a
    physical element it is orthonormal after scaling by 1/sqrt(2|K|).
    """

    degree: int
    exps: np.ndarray
    coeff: np.ndarray  # (nmono, nbasis)
    dx: np.ndarray  # coefficient-space derivative operators
    dy: np.ndarray

    @property
    def size(self) -> int:
        return self.coeff.shape[1]

    def values(self, pts: np.ndarray) -> np.ndarray:
        return monomial_values(self.exps, pts) @ self.coeff

    def grads(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = monomial_values(self.exps, pts)
        return v @ (self.dx @ self.coeff), v @ (self.dy @ self.coeff)


@lru_cache(maxsize=None)
def reference_basis(degree: int) -> ReferenceBasis:
    exps = monomial_exponents(degree)
    pts, w = triangle_rule(2 * degree)
    vand = monomial_values(exps, pts)
    moments = vand.T @ (w[:, None] * vand)
    chol = np.linalg.cholesky(moments)
    coeff = np.linalg.solve(chol, np.eye(len(exps))).T  # inv(L).T
    dx, dy = derivative_matrices(degree)
    return ReferenceBasis(degree=degree, exps=exps, coeff=coeff, dx=dx, dy=dy)
