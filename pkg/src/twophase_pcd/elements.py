"""Reference-square Lagrange bases and Gauss rules on [-1, 1]^2."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_1d(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def lagrange_1d(degree: int, x):
    """Values and derivatives of the equispaced Lagrange basis on [-1, 1].

    Returns arrays of shape (len(x), degree + 1).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if degree == 1:
        v = np.column_stack([(1 - x) / 2, (1 + x) / 2])
        d = np.column_stack([-0.5 * np.ones_like(x), 0.5 * np.ones_like(x)])
    elif degree == 2:
        v = np.column_stack([x * (x - 1) / 2, 1 - x**2, x * (x + 1) / 2])
        d = np.column_stack([x - 0.5, -2 * x, x + 0.5])
    else:
        raise ValueError(f"unsupported degree {degree}")
    return v, d


def tensor_basis_at(degree: int, xi, eta):
    """Tensor basis at points (xi[k], eta[k]), local index b*(degree+1)+a.

    Returns values (npts, nloc) and reference gradients (npts, nloc, 2).
    """
    vx, dx = lagrange_1d(degree, xi)
    vy, dy = lagrange_1d(degree, eta)
    phi = np.einsum("kb,ka->kba", vy, vx).reshape(len(vx), -1)
    gx = np.einsum("kb,ka->kba", vy, dx).reshape(len(vx), -1)
    gy = np.einsum("kb,ka->kba", dy, vx).reshape(len(vx), -1)
    return phi, np.stack([gx, gy], axis=-1)


@lru_cache(maxsize=None)
def quadrature_2d(nq: int):
    x, w = gauss_1d(nq)
    Y, X = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w, w).ravel()
    return pts, wts


@lru_cache(maxsize=None)
def tabulate(degree: int, nq: int):
    """(points, weights, phi, reference grads) for an nq x nq Gauss rule."""
    pts, wts = quadrature_2d(nq)
    phi, dphi = tensor_basis_at(degree, pts[:, 0], pts[:, 1])
    return pts, wts, phi, dphi
