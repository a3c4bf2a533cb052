"""Right-preconditioned full GMRES, sparse direct solves and Chebyshev
semi-iteration for mass matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

REORTH_THRESHOLD = 1e-8


class FactorizationError(RuntimeError):
    """Sparse LU failed, typically because the matrix is singular."""


@dataclass
class LinearOperator:
    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.apply(x)

    @classmethod
    def from_matrix(cls, A):
        return cls(A.shape[0], lambda x: A @ x)

    @classmethod
    def identity(cls, n):
        return cls(n, lambda x: np.array(x, dtype=float, copy=True))


def as_operator(A) -> LinearOperator:
    if isinstance(A, LinearOperator):
        return A
    if callable(A) and not hasattr(A, "shape"):
        raise TypeError("bare callables need a dimension; wrap them in LinearOperator")
    return LinearOperator.from_matrix(A)


@dataclass
class GmresStats:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    termination: str = "max_iter"  # relative_tol | max_iter | breakdown
    breakdown: bool = False
    final_residual: float = math.nan


def gmres(A, M_right=None, b=None, x0=None, rel_tol: float = 1e-6, ref_norm: float | None = None,
          max_iter: int = 400, keep_iterates: bool = False):
    """Full (non-restarted) right-preconditioned GMRES.

    Solves A x = b and stops once ||b - A x||_2 <= rel_tol * ref_norm, where
    ``ref_norm`` defaults to the initial residual norm.  Residuals are
    unpreconditioned, so ``residual_history`` (which starts with the initial
    residual) tracks the true residual of the iterates.  Arnoldi uses
    modified Gram-Schmidt with one reorthogonalisation pass whenever the
    new vector's overlap with the basis exceeds REORTH_THRESHOLD.

    Returns ``(x, stats)``; with ``keep_iterates`` the stats also carry the
    list of iterates in ``stats.iterates``.
    """
    A = as_operator(A)
    n = A.dim
    M = LinearOperator.identity(n) if M_right is None else as_operator(M_right)
    b = np.asarray(b, dtype=float)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()

    r0 = b - A(x0)
    beta = float(np.linalg.norm(r0))
    if ref_norm is None:
        ref_norm = beta
    if ref_norm < 0:
        raise ValueError("ref_norm must be non-negative")
    tol = rel_tol * ref_norm
    stats = GmresStats(residual_history=[beta])
    if keep_iterates:
        stats.iterates = [x0.copy()]
    if beta <= tol or beta == 0.0:
        stats.converged, stats.termination, stats.final_residual = True, "relative_tol", beta
        return x0, stats

    V = [r0 / beta]
    Z = []
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = beta

    for k in range(max_iter):
        Z.append(M(V[k]))
        w = A(Z[k])
        w_norm0 = np.linalg.norm(w)
        for j in range(k + 1):
            H[j, k] = V[j] @ w
            w -= H[j, k] * V[j]
        w_norm = np.linalg.norm(w)
        if w_norm > 0 and np.max(np.abs(np.array([v @ w for v in V]))) > REORTH_THRESHOLD * w_norm:
            for j in range(k + 1):
                corr = V[j] @ w
                H[j, k] += corr
                w -= corr * V[j]
            w_norm = np.linalg.norm(w)
        H[k + 1, k] = w_norm
        lucky = w_norm <= 1e-14 * max(w_norm0, 1e-300)
        if not lucky:
            V.append(w / w_norm)

        for j in range(k):
            t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
            H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
            H[j, k] = t
        denom = math.hypot(H[k, k], H[k + 1, k])
        cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        res = abs(g[k + 1])
        stats.residual_history.append(res)
        stats.iterations = k + 1
        if keep_iterates:
            stats.iterates.append(x0 + _update(H, g, Z, k + 1))
        if lucky:
            stats.breakdown, stats.termination = True, "breakdown"
            break
        if res <= tol:
            stats.converged, stats.termination = True, "relative_tol"
            break

    x = x0 + _update(H, g, Z, stats.iterations)
    stats.final_residual = float(np.linalg.norm(b - A(x)))
    if stats.breakdown:
        stats.converged = stats.final_residual <= max(tol, 1e-12 * ref_norm)
    return x, stats


def _update(H, g, Z, m):
    if m == 0:
        return 0.0
    y = scipy.linalg.solve_triangular(H[:m, :m], g[:m])
    return np.asarray(Z[:m]).T @ y


def sparse_factorize(A) -> Callable[[np.ndarray], np.ndarray]:
    """Exact sparse LU solver for a square nonsingular matrix."""
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise FactorizationError("matrix is exactly singular")
    return lu.solve


def singular_solver(A, nullvec: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Solve a symmetric singular system whose kernel is spanned by ``nullvec``.

    The right-hand side is projected onto the range, the first DOF on the
    support of the kernel vector is pinned, and the result is returned with
    its kernel component removed.
    """
    A = sp.csr_matrix(A)
    c = np.asarray(nullvec, dtype=float)
    cc = c @ c
    pin = int(np.flatnonzero(c)[0])
    keep = np.setdiff1d(np.arange(A.shape[0]), [pin])
    solve = sparse_factorize(A[keep][:, keep])

    def apply(b):
        b = np.asarray(b, dtype=float)
        b = b - c * (c @ b) / cc
        x = np.zeros_like(b)
        x[keep] = solve(b[keep])
        return x - c * (c @ x) / cc

    return apply


CHEBYSHEV_BOUNDS = (0.25, 2.25)


def chebyshev_mass_solve(M, b, steps: int = 3, bounds=CHEBYSHEV_BOUNDS):
    """Approximate M^{-1} b by Chebyshev semi-iteration on diag(M)^{-1} M.

    The iteration starts from the Jacobi guess diag(M)^{-1} b; ``steps=0``
    returns it unchanged.  ``bounds`` enclose the spectrum of the
    diagonally scaled matrix ([1/4, 9/4] for bilinear elements in 2D).
    """
    M = sp.csr_matrix(M)
    b = np.asarray(b, dtype=float)
    dinv = 1.0 / M.diagonal()
    x = dinv * b
    if steps <= 0:
        return x
    lo, hi = bounds
    theta = 0.5 * (hi + lo)
    delta = 0.5 * (hi - lo)
    sigma = theta / delta
    rho = 1.0 / sigma
    r = b - M @ x
    d = dinv * r / theta
    for _ in range(steps):
        x = x + d
        r = r - M @ d
        rho_new = 1.0 / (2.0 * sigma - rho)
        d = rho_new * rho * d + (2.0 * rho_new / delta) * (dinv * r)
        rho = rho_new
    return x


def chebyshev_factor(steps: int, bounds=CHEBYSHEV_BOUNDS) -> float:
    """Worst-case error reduction 2 s^k / (1 + s^2k) of k Chebyshev steps."""
    kappa = bounds[1] / bounds[0]
    s = (math.sqrt(kappa) - 1) / (math.sqrt(kappa) + 1)
    return 2 * s**steps / (1 + s ** (2 * steps))
