"""Lid-driven cavity runs: Stokes bootstrap followed by Picard iteration.

Each Picard step solves K(w_k) delta = -s_k for a correction with zero
initial guess, where s_k is the nonlinear residual at the current iterate,
and GMRES stops once ||r|| <= linear_tol * ||s_k||.  Picard stops when
||s_k|| <= picard_rel_tol * ||s_0||.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .assembly import (assemble_pressure_operators, assemble_saddle_system, assemble_static,
                       set_F_scalings, update_pressure_convection)
from .grid import build_discretization, grid_from_h, normalize_pair
from .krylov import GmresStats, gmres, sparse_factorize
from .precond import (BlockTriangularPreconditioner, check_supported, make_schur_strategy,
                      normalize_kind)

log = logging.getLogger(__name__)


@dataclass
class CavityProblem:
    elements: str = "Q2Q1"
    h: float = 1 / 16
    reynolds: float = 100.0
    rho_ratio: float = 1.0
    mu_ratio: float = 1.0
    alpha: int = 0
    dt: float = 1.0
    schur_kind: str = "pcd2"
    linear_tol: float = 1e-6
    picard_rel_tol: float = 1e-5
    picard_max: int = 50
    max_gmres: int = 400
    bootstrap_kind: str = "gcc"
    mass_solver: str = "exact"
    cheb_steps: int = 3
    lsc_scaling: str = "max"
    project_mean: bool = True
    lid: bool = True
    streamline_diffusion: bool = False

    def __post_init__(self):
        self.elements = normalize_pair(self.elements)
        self.schur_kind = normalize_kind(self.schur_kind)
        self.bootstrap_kind = normalize_kind(self.bootstrap_kind)
        check_supported(self.schur_kind, self.elements)
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")
        if self.alpha and not self.dt > 0:
            raise ValueError("dt must be positive when alpha = 1")
        if self.rho_ratio > self.mu_ratio:
            warnings.warn("rho_ratio > mu_ratio: the second phase has the larger Reynolds number",
                          stacklevel=2)


@dataclass
class SolveReport:
    picard_steps: int = 0
    gmres_counts: list = field(default_factory=list)
    stokes_gmres: int = 0
    nonlinear_residuals: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    failure: str = ""
    solution: np.ndarray | None = field(default=None, repr=False)

    @property
    def avg_gmres(self) -> float:
        return float(np.mean(self.gmres_counts)) if self.gmres_counts else 0.0

    @property
    def avg_gmres_rounded(self) -> int:
        return round_half_up(self.avg_gmres)

    @property
    def max_gmres(self) -> int:
        return max(self.gmres_counts, default=0)

    @property
    def final_nl_rel_residual(self) -> float:
        r = self.nonlinear_residuals
        if not r:
            return math.nan
        return r[-1] / r[0] if r[0] > 0 else 0.0


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


class CavitySolver:
    """Holds the wind-independent pieces of one cavity configuration."""

    def __init__(self, problem: CavityProblem):
        self.problem = problem
        p = problem
        self.grid = grid_from_h(p.h, p.rho_ratio, p.mu_ratio, p.reynolds)
        self.disc = build_discretization(self.grid, p.elements)
        self.static = assemble_static(self.disc)
        self.ops = assemble_pressure_operators(self.disc, static=self.static)
        self._cache: dict = {}

    def full_velocity(self, u_free):
        u = self.disc.boundary_values() if self.problem.lid else np.zeros(self.disc.n_vel_dofs)
        u[self.disc.free_vel] = u_free
        return u

    def system(self, wind=None):
        p = self.problem
        return assemble_saddle_system(self.disc, wind, p.alpha, p.dt, self.static, lid=p.lid,
                                      streamline_diffusion=p.streamline_diffusion)

    def preconditioner(self, system, kind):
        p = self.problem
        update_pressure_convection(self.ops, system.wind)
        F = system.F
        if kind == "lsc_d" or kind == "simple":
            set_F_scalings(self.ops, F)
        F_solve = sparse_factorize(F)
        schur = make_schur_strategy(kind, system, self.ops, mass_solver=p.mass_solver,
                                    cheb_steps=p.cheb_steps, lsc_scaling=p.lsc_scaling,
                                    project=p.project_mean, cache=self._cache)
        return BlockTriangularPreconditioner(system, schur, F_solve)

    def solve_linear(self, system, rhs, ref_norm, kind):
        p = self.problem
        n = system.n_u + system.n_p
        if ref_norm == 0.0:
            return np.zeros(n), GmresStats(converged=True, termination="relative_tol",
                                           residual_history=[0.0], final_residual=0.0)
        P = self.preconditioner(system, kind)
        K = system.K()
        return gmres(K, P.as_operator(), rhs, None, p.linear_tol, ref_norm, p.max_gmres)


def solve_stokes_bootstrap(solver: CavitySolver):
    """Stokes (zero-wind) solve from rest; returns (x, stats, system)."""
    p = solver.problem
    system = solver.system(None)
    b = system.rhs
    x, stats = solver.solve_linear(system, b, float(np.linalg.norm(b)), p.bootstrap_kind)
    return x, stats, system


def picard_step(solver: CavitySolver, x, system=None):
    """One Picard correction at iterate x.

    Returns (x_new, stats, ||s_k||).  ``system`` may carry the already
    assembled system for the wind of x.
    """
    p = solver.problem
    if system is None:
        system = solver.system(solver.full_velocity(x[:solver.disc.n_free_vel]))
    s = system.residual(x)
    s_norm = float(np.linalg.norm(s))
    delta, stats = solver.solve_linear(system, -s, s_norm, p.schur_kind)
    return x + delta, stats, s_norm


def run_cavity(problem: CavityProblem, solver: CavitySolver | None = None) -> SolveReport:
    t0 = time.perf_counter()
    solver = solver or CavitySolver(problem)
    report = SolveReport()
    x, stats, _ = solve_stokes_bootstrap(solver)
    report.stokes_gmres = stats.iterations
    if not stats.converged:
        report.failure = f"Stokes bootstrap GMRES {stats.termination} after {stats.iterations}"
        report.wall_time = time.perf_counter() - t0
        return report

    nu = solver.disc.n_free_vel
    s0 = None
    for k in range(problem.picard_max + 1):
        system = solver.system(solver.full_velocity(x[:nu]))
        s = system.residual(x)
        s_norm = float(np.linalg.norm(s))
        report.nonlinear_residuals.append(s_norm)
        if s0 is None:
            s0 = s_norm
        if s_norm <= problem.picard_rel_tol * s0:
            report.converged = True
            break
        if k == problem.picard_max:
            report.failure = f"Picard not converged after {problem.picard_max} steps"
            break
        delta, stats = solver.solve_linear(system, -s, s_norm, problem.schur_kind)
        report.gmres_counts.append(stats.iterations)
        report.picard_steps += 1
        log.debug("picard %d: |s|=%.3e gmres=%d", k, s_norm, stats.iterations)
        if not stats.converged:
            report.failure = (f"GMRES {stats.termination} at Picard step {k} "
                              f"after {stats.iterations} iterations")
            break
        x = x + delta
    report.wall_time = time.perf_counter() - t0
    report.solution = x
    return report


def run_single_timestep(problem: CavityProblem) -> SolveReport:
    """One backward-Euler step from rest, solved by the same Picard protocol."""
    if problem.alpha != 1:
        raise ValueError("run_single_timestep needs alpha = 1")
    return run_cavity(problem)
