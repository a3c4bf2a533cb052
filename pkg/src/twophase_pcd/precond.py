"""Block-triangular preconditioner and Schur-complement approximations.

Every Schur strategy returns an approximation to S^{-1} v where
S = B F^{-1} B^T + C.  For enclosed flow the constant pressure vector
spans the kernel of S and of every pressure Laplacian-type matrix; the
strategies solve those singular systems on the complement of the kernel
and, by default, project the constant mode out of their output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import (PressureOperators, SaddleSystem, assemble_convection,
                       assemble_divergence, assemble_pressure_convection, assemble_pressure_laplacian,
                       assemble_pressure_mass, assemble_velocity_diffusion,
                       assemble_velocity_mass, build_Fp, project_constant)
from .krylov import LinearOperator, chebyshev_mass_solve, singular_solver, sparse_factorize

STRATEGIES = ("pcd", "cc", "gcc", "pcd_visc", "pcd2_rho", "pcd2",
              "lsc", "lsc_d", "lsc2", "simple", "exact")

_KEY_ALIASES = {
    "pcd-visc": "pcd_visc",
    "pcd2-rho": "pcd2_rho",
    "lsc-d": "lsc_d",
    "exact_oracle": "exact",
}

LSC_KINDS = ("lsc", "lsc_d", "lsc2")


class UnsupportedConfiguration(ValueError):
    """Strategy and element pair do not go together."""


def normalize_kind(kind: str) -> str:
    k = kind.strip().lower()
    k = _KEY_ALIASES.get(k, k)
    if k not in STRATEGIES:
        raise ValueError(f"unknown Schur strategy {kind!r}; choose from {', '.join(STRATEGIES)}")
    return k


def check_supported(kind: str, pair: str) -> None:
    if normalize_kind(kind) in LSC_KINDS and pair == "Q1Q1":
        raise UnsupportedConfiguration(
            "LSC preconditioners are not immediately applicable to stabilised elements "
            "(C != 0); use a PCD-type strategy with Q1-Q1")


def _mass_solver(M, mode: str, steps: int) -> Callable:
    if mode == "exact":
        return sparse_factorize(M)
    if mode == "chebyshev":
        return lambda v: chebyshev_mass_solve(M, v, steps)
    raise ValueError(f"unknown mass solver {mode!r}")


@dataclass
class SchurStrategy:
    """Linear map v -> S_hat^{-1} v with its own factorised sub-solvers."""

    kind: str
    apply_raw: Callable[[np.ndarray], np.ndarray]
    nullvec: np.ndarray
    project: bool = True

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        x = self.apply_raw(v)
        return project_constant(x, self.nullvec) if self.project else x

    __call__ = apply


def make_schur_strategy(kind: str, system: SaddleSystem, ops: PressureOperators, *,
                        mass_solver: str = "exact", cheb_steps: int = 3,
                        lsc_scaling: str = "max", drop_factor_two: bool = False,
                        project: bool = True, cache: dict | None = None) -> SchurStrategy:
    """Build one of the Schur-complement approximations by key.

    ``drop_factor_two`` swaps the (2 mu)^{-1} pressure mass of the two-phase
    strategies for mu^{-1}, matching a Laplacian-form viscous term.
    ``lsc_scaling`` selects D_ii = max_j |F_ij| ("max") or diag(F) ("diag")
    for LSC_D.  ``cache`` (a dict owned by the caller) keeps the
    wind-independent mass and Laplacian factorisations between Picard steps.
    """
    kind = normalize_kind(kind)
    disc = system.disc
    check_supported(kind, disc.pair)
    c = disc.constant_pressure
    alpha, dt = system.alpha, system.dt
    tau = alpha / dt if alpha else 0.0

    cache = {} if cache is None else cache

    def mass(w):
        key = ("mass", w, mass_solver, cheb_steps)
        if key not in cache:
            cache[key] = _mass_solver(ops.Mp[w], mass_solver, cheb_steps)
        return cache[key]

    def lap(w):
        key = ("lap", w)
        if key not in cache:
            cache[key] = singular_solver(ops.Ap[w], c)
        return cache[key]

    visc_mass = "inv_mu" if drop_factor_two else "inv2mu"

    if kind == "pcd":
        Mp, Ap = mass("one"), lap("one")
        Fp = build_Fp(ops, alpha, dt, "rho", "rho")
        f = lambda v: Ap(Fp @ Mp(v))
    elif kind == "cc":
        Mmu, Ap = mass("inv_mu"), lap("one")
        f = lambda v: Mmu(v) + tau * Ap(v) if tau else Mmu(v)
    elif kind == "gcc":
        Mmu, Ap = mass(visc_mass), lap("inv_rho")
        f = lambda v: Mmu(v) + tau * Ap(v) if tau else Mmu(v)
    elif kind == "pcd_visc":
        Mmu, Ap = mass(visc_mass), lap("mu")
        Fp = build_Fp(ops, alpha, dt, "rho", "rho")
        f = lambda v: Ap(Fp @ Mmu(v))
    elif kind in ("pcd2", "pcd2_rho"):
        w = "one" if kind == "pcd2" else "rho"
        Mmu, Mw, Ap = mass(visc_mass), mass(w), lap("inv_rho")
        G = ops.Np[w] + tau * ops.Mp[w] if tau else ops.Np[w]
        f = lambda v: Mmu(v) + Ap(G @ Mw(v))
    elif kind in LSC_KINDS:
        if kind == "lsc":
            W = ops.T
        elif kind == "lsc2":
            W = ops.T_mu
        else:
            W = ops.D_max if lsc_scaling == "max" else ops.D_diag
            if W is None:
                W = _F_scaling(system.F, lsc_scaling)
        winv = 1.0 / W
        B, F = system.B, system.F
        L = (B @ sp.diags(winv) @ B.T).tocsr()
        Lsolve = singular_solver(L, c)
        BT = B.T.tocsr()
        f = lambda v: Lsolve(B @ (winv * (F @ (winv * (BT @ Lsolve(v))))))
    elif kind == "simple":
        dF = system.F.diagonal()
        L = (system.B @ sp.diags(1.0 / dF) @ system.B.T + system.C).tocsr()
        f = singular_solver(L, c)
    else:
        f = exact_schur_solver(system)
    return SchurStrategy(kind, f, c, project)


def _F_scaling(F, mode):
    F = sp.csr_matrix(F)
    if mode == "diag":
        return F.diagonal()
    return np.asarray(abs(F).max(axis=1).todense()).ravel()


def dense_schur(system: SaddleSystem, F_solve=None) -> np.ndarray:
    """S = B F^{-1} B^T + C as a dense array (small grids only)."""
    F_solve = F_solve or sparse_factorize(system.F)
    BT = system.B.T.toarray()
    X = F_solve(BT)
    return system.B @ X + system.C.toarray()


def exact_schur_solver(system: SaddleSystem) -> Callable:
    """Dense exact S^{-1} on the complement of the constant pressure mode."""
    c = system.disc.constant_pressure
    S = dense_schur(system)
    S_reg = S + np.outer(c, c) / (c @ c)
    lu = scipy.linalg.lu_factor(S_reg)
    return lambda v: scipy.linalg.lu_solve(lu, project_constant(v, c))


class BlockTriangularPreconditioner:
    """Right preconditioner P = [[F_hat, B^T], [0, -S_hat]].

    Applying P^{-1} to (r_u, r_p) gives z_p = -S_hat^{-1} r_p and
    z_u = F^{-1}(r_u - B^T z_p).
    """

    def __init__(self, system: SaddleSystem, schur: SchurStrategy, F_solve=None):
        self.system = system
        self.schur = schur
        self.F_solve = F_solve or sparse_factorize(system.F)
        self.BT = system.B.T.tocsr()
        self.n_u = system.n_u

    def apply_blocks(self, r_u, r_p):
        z_p = -self.schur(r_p)
        z_u = self.F_solve(r_u - self.BT @ z_p)
        return z_u, z_p

    def apply(self, r):
        z_u, z_p = self.apply_blocks(r[:self.n_u], r[self.n_u:])
        return np.concatenate([z_u, z_p])

    __call__ = apply

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.n_u + self.system.n_p, self.apply)


def commutator_norm(disc, wind=None, mu: float = 1.0, form: str = "laplacian") -> tuple:
    """Frobenius norm of the discrete convection-diffusion commutator.

    E_h = (Mp^-1 B)(M^-1 F) - (Mp^-1 Fp)(Mp^-1 B) with constant unit density,
    F = mu A + N on the Dirichlet-eliminated velocity space and
    Fp = mu Ap + Np.  Returns ``(||E_h||_F, ||(Mp^-1 B)(M^-1 F)||_F)`` so the
    caller can form a relative size.  Dense; small grids only.
    """
    free = disc.free_vel
    nvd = disc.n_vel_dofs
    wind = np.zeros(nvd) if wind is None else np.asarray(wind, dtype=float)
    A = assemble_velocity_diffusion(disc, form, weight="one")
    N = assemble_convection(disc, wind, "one")
    F = (mu * A + N).tocsr()[free][:, free]
    M = assemble_velocity_mass(disc, "one").tocsr()[free][:, free]
    B = assemble_divergence(disc).tocsr()[:, free]
    Mp = assemble_pressure_mass(disc, "one")
    Fp = (mu * assemble_pressure_laplacian(disc, "one")
          + assemble_pressure_convection(disc, wind, "one")).tocsr()
    Mp_solve = sparse_factorize(Mp)
    M_solve = sparse_factorize(M)
    Y = Mp_solve(B.toarray())  # Mp^-1 B
    left = (F.T @ M_solve(Y.T)).T  # Y M^-1 F
    right = Mp_solve(Fp @ Y)
    return float(np.linalg.norm(left - right)), float(np.linalg.norm(left))
