"""Structured cavity mesh, two-phase coefficients and mixed DOF maps.

The domain is (-1, 1)^2 split into n x n square elements, numbered
row-major from the lower-left corner.  Phase 2 occupies (-1/2, 1/2)^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

PAIRS = ("Q2Q1", "Q1Q1", "Q2Pm1")

_PAIR_ALIASES = {
    "q2q1": "Q2Q1",
    "q1q1": "Q1Q1",
    "q2pm1": "Q2Pm1",
    "q2p1": "Q2Pm1",
    "q2p-1": "Q2Pm1",
}


class GridAlignmentError(ValueError):
    """The interface square does not lie on element edges."""


class DomainError(ValueError):
    """A physical parameter is outside its admissible range."""


def normalize_pair(pair: str) -> str:
    key = pair.strip().lower()
    if key not in _PAIR_ALIASES:
        raise ValueError(f"unknown element pair {pair!r}; expected one of {PAIRS}")
    return _PAIR_ALIASES[key]


@dataclass(frozen=True)
class PhaseGrid:
    n_per_side: int
    h: float
    elem_phase: np.ndarray
    rho: np.ndarray
    mu: np.ndarray
    reynolds: float
    rho_ratio: float
    mu_ratio: float

    @property
    def n_elements(self) -> int:
        return self.n_per_side**2

    def element_centroids(self) -> np.ndarray:
        n, h = self.n_per_side, self.h
        c = -1.0 + h * (np.arange(n) + 0.5)
        xc, yc = np.meshgrid(c, c)  # row-major, y outer
        return np.column_stack([xc.ravel(), yc.ravel()])

    def element_index(self, ix: int, iy: int) -> int:
        return iy * self.n_per_side + ix

    def phase_areas(self) -> tuple[float, float]:
        area = self.h**2
        n2 = int(np.count_nonzero(self.elem_phase == 2))
        return area * (self.n_elements - n2), area * n2


def build_grid(n_per_side: int, rho_ratio: float = 1.0, mu_ratio: float = 1.0,
               reynolds: float = 1.0, *, check_alignment: bool = True) -> PhaseGrid:
    """Build the cavity grid with piecewise-constant density and viscosity.

    Phase 1 has density 1 and viscosity 1/Re, phase 2 has density
    ``rho_ratio`` and viscosity ``mu_ratio / Re``.  Elements are assigned
    to phase 2 when their centroid lies inside (-1/2, 1/2)^2.
    """
    n = int(n_per_side)
    if n != n_per_side or n < 1:
        raise GridAlignmentError(f"n_per_side must be a positive integer, got {n_per_side!r}")
    if check_alignment and (n < 4 or n % 4):
        raise GridAlignmentError(
            f"n_per_side={n} must be a multiple of 4 so the interface lies on element edges")
    for name, val in (("rho_ratio", rho_ratio), ("mu_ratio", mu_ratio), ("reynolds", reynolds)):
        if not np.isfinite(val) or val <= 0:
            raise DomainError(f"{name} must be positive, got {val!r}")

    h = 2.0 / n
    c = -1.0 + h * (np.arange(n) + 0.5)
    xc, yc = np.meshgrid(c, c)
    inside = (np.abs(xc) < 0.5) & (np.abs(yc) < 0.5)
    phase = np.where(inside.ravel(), 2, 1).astype(np.int8)
    rho = np.where(phase == 2, float(rho_ratio), 1.0)
    mu = np.where(phase == 2, float(mu_ratio) / reynolds, 1.0 / reynolds)
    for arr in (phase, rho, mu):
        arr.setflags(write=False)
    return PhaseGrid(n, h, phase, rho, mu, float(reynolds), float(rho_ratio), float(mu_ratio))


def grid_from_h(h: float, rho_ratio: float = 1.0, mu_ratio: float = 1.0,
                reynolds: float = 1.0, **kw) -> PhaseGrid:
    n = Fraction(2) / Fraction(h).limit_denominator(1 << 20)
    if n.denominator != 1:
        raise GridAlignmentError(f"h={h} does not divide the cavity side 2")
    return build_grid(int(n), rho_ratio, mu_ratio, reynolds, **kw)


def lid_values(x):
    """Regularised lid profile (1 - x^4, 0) on y = 1."""
    x = np.asarray(x, dtype=float)
    return np.stack([1.0 - x**4, np.zeros_like(x)], axis=-1)


def total_dof_formula(pair: str, h) -> int:
    """Total DOF count (free velocity + all pressure) by closed formula."""
    pair = normalize_pair(pair)
    inv = Fraction(1) / Fraction(h)
    if inv.denominator != 1:
        raise ValueError(f"1/h must be an integer, got h={h}")
    k = int(inv)
    if pair == "Q2Q1":
        return 2 * (4 * k - 1) ** 2 + (2 * k + 1) ** 2
    if pair == "Q1Q1":
        return 2 * (2 * k - 1) ** 2 + (2 * k + 1) ** 2
    return 2 * (4 * k - 1) ** 2 + 3 * (2 * k) ** 2


@dataclass(frozen=True)
class MixedDiscretization:
    """DOF maps for one mixed element pair on a :class:`PhaseGrid`.

    Velocity unknowns are ordered x-components first, then y-components,
    over all velocity nodes (boundary included).  ``free_vel`` indexes the
    unknowns kept after Dirichlet elimination.
    """

    pair: str
    grid: PhaseGrid
    vel_degree: int
    vel_coords: np.ndarray  # (n_nodes, 2)
    vel_elem_nodes: np.ndarray  # (n_elem, nloc) lexicographic, x fastest
    pre_coords: np.ndarray  # nodes (Q1) or element centroids (Pm1)
    pre_elem_dofs: np.ndarray  # (n_elem, 4) or (n_elem, 3)
    dirichlet_vel: np.ndarray
    free_vel: np.ndarray
    constant_pressure: np.ndarray = field(repr=False)

    @property
    def n_vel_nodes(self) -> int:
        return self.vel_coords.shape[0]

    @property
    def n_vel_dofs(self) -> int:
        return 2 * self.n_vel_nodes

    @property
    def n_free_vel(self) -> int:
        return self.free_vel.size

    @property
    def n_pre_dofs(self) -> int:
        return self.constant_pressure.size

    @property
    def total_dofs(self) -> int:
        return self.n_free_vel + self.n_pre_dofs

    @property
    def discontinuous_pressure(self) -> bool:
        return self.pair == "Q2Pm1"

    def vel_elem_dofs(self) -> np.ndarray:
        """(n_elem, 2*nloc) global velocity unknowns, x-block then y-block."""
        nodes = self.vel_elem_nodes
        return np.hstack([nodes, nodes + self.n_vel_nodes])

    def boundary_values(self, lid=lid_values) -> np.ndarray:
        """Full velocity vector holding the Dirichlet data (zero elsewhere)."""
        u = np.zeros(self.n_vel_dofs)
        xy = self.vel_coords
        on_lid = np.isclose(xy[:, 1], 1.0)
        vals = lid(xy[on_lid, 0])
        idx = np.flatnonzero(on_lid)
        u[idx] = vals[:, 0]
        u[idx + self.n_vel_nodes] = vals[:, 1]
        return u


def _tensor_nodes(n_elem_side: int, degree: int):
    m = degree * n_elem_side + 1
    s = np.linspace(-1.0, 1.0, m)
    X, Y = np.meshgrid(s, s)
    coords = np.column_stack([X.ravel(), Y.ravel()])
    e = np.arange(n_elem_side)
    ey, ex = np.meshgrid(e, e, indexing="ij")
    base = (degree * ey * m + degree * ex).ravel()
    loc = np.array([b * m + a for b in range(degree + 1) for a in range(degree + 1)])
    elem_nodes = base[:, None] + loc[None, :]
    on_bdry = (np.isclose(np.abs(coords[:, 0]), 1.0) | np.isclose(np.abs(coords[:, 1]), 1.0))
    return coords, elem_nodes, np.flatnonzero(on_bdry)


def build_discretization(grid: PhaseGrid, pair: str) -> MixedDiscretization:
    pair = normalize_pair(pair)
    n = grid.n_per_side
    vdeg = 1 if pair == "Q1Q1" else 2
    vcoords, vnodes, vbd = _tensor_nodes(n, vdeg)
    nv = vcoords.shape[0]
    dirichlet = np.concatenate([vbd, vbd + nv])
    free = np.setdiff1d(np.arange(2 * nv), dirichlet)

    if pair == "Q2Pm1":
        ne = grid.n_elements
        pcoords = grid.element_centroids()
        pdofs = 3 * np.arange(ne)[:, None] + np.arange(3)[None, :]
        const = np.zeros(3 * ne)
        const[0::3] = 1.0
    else:
        pcoords, pdofs, _ = _tensor_nodes(n, 1)
        const = np.ones(pcoords.shape[0])
    for arr in (vcoords, vnodes, pcoords, pdofs, dirichlet, free, const):
        arr.setflags(write=False)
    return MixedDiscretization(pair, grid, vdeg, vcoords, vnodes, pcoords, pdofs,
                               dirichlet, free, const)
