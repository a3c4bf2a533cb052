"""Finite-element matrices for the two-phase Oseen problem.

All element integrals use tensor Gauss rules that are exact for the
(piecewise-polynomial) integrands, since density and viscosity are
constant on each element.  Velocity matrices are returned on the full
velocity space (boundary nodes included); :func:`assemble_saddle_system`
performs the Dirichlet elimination.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .elements import gauss_1d, tabulate, tensor_basis_at
from .grid import MixedDiscretization, PhaseGrid

# Gauss points per direction; each is exact for the integrand it serves.
_NQ_MASS = {1: 2, 2: 3}
_NQ_CONV = {1: 2, 2: 4}
_NQ_SD = {1: 3, 2: 5}


def coefficient(grid: PhaseGrid, weight: str) -> np.ndarray:
    """Per-element value of a named coefficient field."""
    table = {
        "one": lambda: np.ones(grid.n_elements),
        "rho": lambda: grid.rho,
        "mu": lambda: grid.mu,
        "inv_rho": lambda: 1.0 / grid.rho,
        "inv_mu": lambda: 1.0 / grid.mu,
        "inv2mu": lambda: 0.5 / grid.mu,
    }
    try:
        return np.asarray(table[weight](), dtype=float)
    except KeyError:
        raise ValueError(f"unknown weight {weight!r}") from None


def _scatter(row_dofs, col_dofs, elem, shape) -> sp.csr_matrix:
    r = np.broadcast_to(row_dofs[:, :, None], elem.shape)
    c = np.broadcast_to(col_dofs[:, None, :], elem.shape)
    return sp.csr_matrix((elem.ravel(), (r.ravel(), c.ravel())), shape=shape)


def _pm1_basis(h, xi, eta):
    """Discontinuous linear basis {1, x - xc, y - yc} at reference points."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack([np.ones_like(xi), 0.5 * h * xi, 0.5 * h * eta], axis=-1)


def _pressure_basis(disc: MixedDiscretization, pts):
    """Pressure basis values (npts, nloc) and physical gradients (npts, nloc, 2)."""
    h = disc.grid.h
    if disc.discontinuous_pressure:
        psi = _pm1_basis(h, pts[:, 0], pts[:, 1])
        grad = np.zeros(psi.shape + (2,))
        grad[:, 1, 0] = 1.0
        grad[:, 2, 1] = 1.0
        return psi, grad
    psi, dpsi = tensor_basis_at(1, pts[:, 0], pts[:, 1])
    return psi, dpsi * (2.0 / h)


def _block2(S: sp.spmatrix) -> sp.csr_matrix:
    return sp.block_diag([S, S], format="csr")


# --- velocity space -------------------------------------------------------

def assemble_scalar_mass(disc: MixedDiscretization, weight: str = "one", nq=None):
    """Weighted mass matrix for one velocity component."""
    g, deg = disc.grid, disc.vel_degree
    _, wts, phi, _ = tabulate(deg, nq or _NQ_MASS[deg])
    ref = (g.h**2 / 4.0) * np.einsum("q,qi,qj->ij", wts, phi, phi)
    elem = coefficient(g, weight)[:, None, None] * ref[None]
    nodes = disc.vel_elem_nodes
    return _scatter(nodes, nodes, elem, (disc.n_vel_nodes,) * 2)


def assemble_velocity_mass(disc: MixedDiscretization, weight: str = "one", nq=None):
    """Vector mass matrix int w phi_j . phi_i, both components."""
    return _block2(assemble_scalar_mass(disc, weight, nq))


def velocity_diffusion_element(degree: int, h: float, form: str = "deformation", nq=None):
    """Element matrix of int 2 D(u):D(v) (or grad u : grad v) for unit viscosity.

    Rows and columns are ordered [x-component dofs, y-component dofs].
    """
    _, wts, _, dphi = tabulate(degree, nq or _NQ_MASS[degree])
    G = dphi * (2.0 / h)
    jac = h**2 / 4.0
    K = {(a, b): jac * np.einsum("q,qi,qj->ij", wts, G[:, :, a], G[:, :, b])
         for a in range(2) for b in range(2)}
    if form == "deformation":
        return np.block([[2 * K[0, 0] + K[1, 1], K[1, 0]],
                         [K[0, 1], K[0, 0] + 2 * K[1, 1]]])
    if form == "laplacian":
        lap = K[0, 0] + K[1, 1]
        z = np.zeros_like(lap)
        return np.block([[lap, z], [z, lap]])
    raise ValueError(f"unknown viscous form {form!r}")


def assemble_velocity_diffusion(disc: MixedDiscretization, form: str = "deformation",
                                weight: str = "mu", nq=None):
    """Viscous matrix a(u, v) = int 2 mu D(u):D(v)."""
    ref = velocity_diffusion_element(disc.vel_degree, disc.grid.h, form, nq)
    elem = coefficient(disc.grid, weight)[:, None, None] * ref[None]
    dofs = disc.vel_elem_dofs()
    return _scatter(dofs, dofs, elem, (disc.n_vel_dofs,) * 2)


def _wind_at(disc: MixedDiscretization, wind, pts):
    """Velocity field evaluated at reference points of every element, (ne, nq, 2)."""
    wind = np.asarray(wind, dtype=float)
    if wind.shape != (disc.n_vel_dofs,):
        raise ValueError(
            f"wind has shape {wind.shape}, expected ({disc.n_vel_dofs},) full velocity vector")
    phi, _ = tensor_basis_at(disc.vel_degree, pts[:, 0], pts[:, 1])
    nodes = disc.vel_elem_nodes
    nv = disc.n_vel_nodes
    wx = wind[:nv][nodes] @ phi.T
    wy = wind[nv:][nodes] @ phi.T
    return np.stack([wx, wy], axis=-1)


def assemble_scalar_convection(disc: MixedDiscretization, wind, weight: str = "rho", nq=None):
    g, deg = disc.grid, disc.vel_degree
    pts, wts, phi, dphi = tabulate(deg, nq or _NQ_CONV[deg])
    W = _wind_at(disc, wind, pts)
    # (h^2/4) jacobian times (2/h) gradient scaling
    adv = np.einsum("eqd,qjd->eqj", W, dphi) * (g.h / 2.0)
    elem = np.einsum("q,qi,eqj->eij", wts, phi, adv)
    elem *= coefficient(g, weight)[:, None, None]
    nodes = disc.vel_elem_nodes
    return _scatter(nodes, nodes, elem, (disc.n_vel_nodes,) * 2)


def streamline_parameters(disc: MixedDiscretization, wind) -> np.ndarray:
    """Element parameters delta_e = h/(2|w|) (1 - 1/Pe), Pe = |w| h rho/(2 mu), 0 if Pe <= 1.

    |w| is the wind magnitude at the element centre.
    """
    g = disc.grid
    w = np.linalg.norm(_wind_at(disc, wind, np.zeros((1, 2)))[:, 0], axis=-1)
    pe = w * g.h * coefficient(g, "rho") / (2.0 * coefficient(g, "mu"))
    delta = np.zeros_like(w)
    on = pe > 1.0
    delta[on] = g.h / (2.0 * w[on]) * (1.0 - 1.0 / pe[on])
    return delta


def assemble_streamline_diffusion(disc: MixedDiscretization, wind, nq=None):
    """Streamline diffusion sum_e delta_e int rho (w . grad phi_j)(w . grad phi_i).

    Off by default in the solver; see ``streamline_diffusion`` in
    :func:`assemble_saddle_system`.
    """
    g, deg = disc.grid, disc.vel_degree
    pts, wts, _, dphi = tabulate(deg, nq or _NQ_SD[deg])
    W = _wind_at(disc, wind, pts)
    adv = np.einsum("eqd,qjd->eqj", W, dphi) * (2.0 / g.h)
    elem = np.einsum("q,eqi,eqj->eij", wts * (g.h / 2.0) ** 2, adv, adv)
    elem *= (coefficient(g, "rho") * streamline_parameters(disc, wind))[:, None, None]
    nodes = disc.vel_elem_nodes
    return _block2(_scatter(nodes, nodes, elem, (disc.n_vel_nodes,) * 2))


def assemble_convection(disc: MixedDiscretization, wind, weight: str = "rho",
                        space: str = "velocity", nq=None):
    """Convection matrix int w (wind . grad basis_j) basis_i.

    ``space='velocity'`` gives the vector operator N^(w); ``space='pressure'``
    gives N_p^(w) on the pressure space.
    """
    if space == "velocity":
        return _block2(assemble_scalar_convection(disc, wind, weight, nq))
    if space == "pressure":
        return assemble_pressure_convection(disc, wind, weight, nq)
    raise ValueError(f"unknown space {space!r}")


def assemble_divergence(disc: MixedDiscretization, nq=None):
    """B with B[k, j] = -int psi_k div phi_j, shape (n_pre, n_vel_dofs)."""
    g, deg = disc.grid, disc.vel_degree
    pts, wts, _, dphi = tabulate(deg, nq or _NQ_MASS[deg])
    psi, _ = _pressure_basis(disc, pts)
    # -(h^2/4) * (2/h)
    scale = -g.h / 2.0
    Bx = scale * np.einsum("q,qk,qj->kj", wts, psi, dphi[:, :, 0])
    By = scale * np.einsum("q,qk,qj->kj", wts, psi, dphi[:, :, 1])
    ref = np.hstack([Bx, By])
    elem = np.broadcast_to(ref, (g.n_elements,) + ref.shape)
    return _scatter(disc.pre_elem_dofs, disc.vel_elem_dofs(), elem,
                    (disc.n_pre_dofs, disc.n_vel_dofs))


# --- pressure space -------------------------------------------------------

def _pressure_element_mass(disc, nq=None):
    pts, wts = tabulate(1, nq or 3)[:2]
    psi, _ = _pressure_basis(disc, pts)
    return (disc.grid.h**2 / 4.0) * np.einsum("q,qi,qj->ij", wts, psi, psi)


def assemble_pressure_mass(disc: MixedDiscretization, weight: str = "one", nq=None):
    """Weighted pressure mass matrix int w psi_j psi_i."""
    ref = _pressure_element_mass(disc, nq)
    elem = coefficient(disc.grid, weight)[:, None, None] * ref[None]
    d = disc.pre_elem_dofs
    return _scatter(d, d, elem, (disc.n_pre_dofs,) * 2)


def assemble_stabilization(disc: MixedDiscretization, nq=None):
    """Local projection stabilisation sum_e mu^-1 int (p - P0 p)(q - P0 q).

    Zero for the inf-sup stable pairs.
    """
    n = disc.n_pre_dofs
    if disc.pair != "Q1Q1":
        return sp.csr_matrix((n, n))
    h = disc.grid.h
    M1 = _pressure_element_mass(disc, nq)
    m = M1.sum(axis=1)
    ref = M1 - np.outer(m, m) / h**2
    elem = coefficient(disc.grid, "inv_mu")[:, None, None] * ref[None]
    d = disc.pre_elem_dofs
    return _scatter(d, d, elem, (n, n))


def _interior_edges(grid: PhaseGrid):
    """Pairs (a, b) of neighbouring elements with the normal pointing a -> b.

    Returns (vertical-edge pairs, horizontal-edge pairs).
    """
    n = grid.n_per_side
    idx = np.arange(n * n).reshape(n, n)  # [iy, ix]
    xa, xb = idx[:, :-1].ravel(), idx[:, 1:].ravel()
    ya, yb = idx[:-1, :].ravel(), idx[1:, :].ravel()
    return (xa, xb), (ya, yb)


def _edge_weight(grid: PhaseGrid, weight: str, a, b):
    if weight == "inv_rho":
        return 2.0 / (grid.rho[a] + grid.rho[b])
    if weight == "mu":
        return 0.5 * (grid.mu[a] + grid.mu[b])
    if weight == "one":
        return np.ones(len(a))
    raise ValueError(f"unsupported Laplacian weight {weight!r}")


def _pm1_laplacian(disc: MixedDiscretization, weight: str):
    """Laplacian-type operator for discontinuous linear pressure.

    Centroid values couple through the five-point cell-centred stencil (no
    flux through the cavity walls).  Edge coefficients use the arithmetic
    mean of the two cell values, of rho itself for the 1/rho weight.  Slope
    values carry the broken gradient term int_e w |grad q|^2.
    """
    g = disc.grid
    rows, cols, vals = [], [], []
    for a, b in _interior_edges(g):
        k = _edge_weight(g, weight, a, b)
        ca, cb = 3 * a, 3 * b
        rows += [ca, cb, ca, cb]
        cols += [ca, cb, cb, ca]
        vals += [k, k, -k, -k]
    slope = coefficient(g, weight) * g.h**2
    e = np.arange(g.n_elements)
    rows += [3 * e + 1, 3 * e + 2]
    cols += [3 * e + 1, 3 * e + 2]
    vals += [slope, slope]
    n = disc.n_pre_dofs
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def assemble_pressure_laplacian(disc: MixedDiscretization, weight: str = "one", nq=None):
    """Pressure Laplacian-type matrix int w grad psi_j . grad psi_i.

    For discontinuous pressure the cell-centred construction of
    :func:`_pm1_laplacian` is used instead.
    """
    if disc.discontinuous_pressure:
        return _pm1_laplacian(disc, weight)
    g = disc.grid
    pts, wts = tabulate(1, nq or 2)[:2]
    _, grad = _pressure_basis(disc, pts)
    ref = (g.h**2 / 4.0) * np.einsum("q,qid,qjd->ij", wts, grad, grad)
    elem = coefficient(g, weight)[:, None, None] * ref[None]
    d = disc.pre_elem_dofs
    return _scatter(d, d, elem, (disc.n_pre_dofs,) * 2)


def _pm1_convection(disc: MixedDiscretization, wind, weight: str):
    """Upwind discontinuous convection operator on the P-1 pressure space."""
    g = disc.grid
    h = g.h
    coef = coefficient(g, weight)
    # element interiors: int_e (w . grad psi_j) psi_i
    pts, wts = tabulate(2, 3)[:2]
    W = _wind_at(disc, wind, pts)
    psi, grad = _pressure_basis(disc, pts)
    elem = (h**2 / 4.0) * np.einsum("q,qi,eqd,qjd->eij", wts, psi, W, grad)
    elem *= coef[:, None, None]
    d = disc.pre_elem_dofs
    n = disc.n_pre_dofs
    N = _scatter(d, d, elem, (n, n))

    s, ws = gauss_1d(3)
    ds = 0.5 * h * ws
    one = np.ones_like(s)
    (xa, xb), (ya, yb) = _interior_edges(g)
    # vertical edges: a on the left (xi = 1), b on the right (xi = -1)
    wa = _wind_at(disc, wind, np.column_stack([one, s]))[xa][..., 0]
    psi_a_v = _pm1_basis(h, one, s)
    psi_b_v = _pm1_basis(h, -one, s)
    # horizontal edges: a below (eta = 1), b above (eta = -1)
    wb = _wind_at(disc, wind, np.column_stack([s, one]))[ya][..., 1]
    psi_a_h = _pm1_basis(h, s, one)
    psi_b_h = _pm1_basis(h, s, -one)

    blocks = []
    for a, b, wn, pa, pb in ((xa, xb, wa, psi_a_v, psi_b_v), (ya, yb, wb, psi_a_h, psi_b_h)):
        into_b = np.maximum(wn, 0.0) * ds  # flow a -> b, b is downstream
        into_a = np.maximum(-wn, 0.0) * ds
        da, db = d[a], d[b]
        # |w.n| (p_down - p_up) q_down, weighted by the downstream coefficient
        bb = np.einsum("eq,qi,qj->eij", into_b, pb, pb) * coef[b][:, None, None]
        ba = -np.einsum("eq,qi,qj->eij", into_b, pb, pa) * coef[b][:, None, None]
        aa = np.einsum("eq,qi,qj->eij", into_a, pa, pa) * coef[a][:, None, None]
        ab = -np.einsum("eq,qi,qj->eij", into_a, pa, pb) * coef[a][:, None, None]
        blocks += [_scatter(db, db, bb, (n, n)), _scatter(db, da, ba, (n, n)),
                   _scatter(da, da, aa, (n, n)), _scatter(da, db, ab, (n, n))]
    for blk in blocks:
        N = N + blk
    return N.tocsr()


def assemble_pressure_convection(disc: MixedDiscretization, wind, weight: str = "one", nq=None):
    """Pressure convection N_p^(w) = int w (wind . grad psi_j) psi_i."""
    if disc.discontinuous_pressure:
        return _pm1_convection(disc, wind, weight)
    g = disc.grid
    pts, wts = tabulate(1, nq or 3)[:2]
    W = _wind_at(disc, wind, pts)
    psi, grad = _pressure_basis(disc, pts)
    elem = (g.h**2 / 4.0) * np.einsum("q,qi,eqd,qjd->eij", wts, psi, W, grad)
    elem *= coefficient(g, weight)[:, None, None]
    d = disc.pre_elem_dofs
    return _scatter(d, d, elem, (disc.n_pre_dofs,) * 2)


# --- system containers ----------------------------------------------------

@dataclass(frozen=True)
class StaticBlocks:
    """Wind-independent full-space matrices, assembled once per problem."""

    A: sp.csr_matrix
    M_rho: sp.csr_matrix
    M_one: sp.csr_matrix
    M_mu: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix


def assemble_static(disc: MixedDiscretization, viscous_form: str = "deformation") -> StaticBlocks:
    return StaticBlocks(
        A=assemble_velocity_diffusion(disc, viscous_form),
        M_rho=assemble_velocity_mass(disc, "rho"),
        M_one=assemble_velocity_mass(disc, "one"),
        M_mu=assemble_velocity_mass(disc, "mu"),
        B=assemble_divergence(disc),
        C=assemble_stabilization(disc),
    )


@dataclass(frozen=True)
class SaddleSystem:
    """Dirichlet-eliminated blocks of the generalised Oseen system.

    K = [[F, B^T], [B, -C]] with F = (alpha/dt) M_rho + N_rho + A_mu.
    """

    disc: MixedDiscretization
    A_mu: sp.csr_matrix
    N_rho: sp.csr_matrix
    M_rho: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    alpha: int
    dt: float
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    wind: np.ndarray = field(repr=False)
    has_lid: bool = True

    @property
    def F(self) -> sp.csr_matrix:
        F = self.A_mu + self.N_rho
        if self.alpha:
            F = F + (self.alpha / self.dt) * self.M_rho
        return F.tocsr()

    @property
    def n_u(self) -> int:
        return self.A_mu.shape[0]

    @property
    def n_p(self) -> int:
        return self.B.shape[0]

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_p])

    def K(self) -> sp.csr_matrix:
        return sp.bmat([[self.F, self.B.T], [self.B, -self.C]], format="csr")

    def residual(self, x: np.ndarray) -> np.ndarray:
        """K x - rhs for a stacked (u_free, p) vector."""
        return self.K() @ x - self.rhs

    def full_velocity(self, u_free: np.ndarray) -> np.ndarray:
        """Insert free velocity values next to the Dirichlet data."""
        u = self.disc.boundary_values() if self.has_lid else np.zeros(self.disc.n_vel_dofs)
        u[self.disc.free_vel] = u_free
        return u


def project_constant(p: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Remove the component of p along the constant-pressure vector c."""
    return p - c * (c @ p) / (c @ c)


def assemble_saddle_system(disc: MixedDiscretization, wind=None, alpha: int = 0, dt: float = 1.0,
                           static: StaticBlocks | None = None, lid: bool = True,
                           u_old=None, streamline_diffusion: bool = False) -> SaddleSystem:
    """Assemble and Dirichlet-eliminate the Oseen system for a given wind.

    ``wind`` is a full velocity vector (None means zero, i.e. Stokes).  The lid
    data enter the right-hand side through the eliminated columns.  ``u_old``
    is the previous time level (full vector) for ``alpha = 1``; at rest by
    default.  ``streamline_diffusion`` adds the streamline-diffusion term to
    the convection block.
    """
    if alpha not in (0, 1):
        raise ValueError("alpha must be 0 or 1")
    if alpha and not dt > 0:
        raise ValueError("dt must be positive for time-dependent problems")
    static = static or assemble_static(disc)
    nvd = disc.n_vel_dofs
    wind = np.zeros(nvd) if wind is None else np.asarray(wind, dtype=float)
    N_full = assemble_convection(disc, wind, "rho") if np.any(wind) else sp.csr_matrix((nvd, nvd))
    if streamline_diffusion and np.any(wind):
        N_full = N_full + assemble_streamline_diffusion(disc, wind)
    F_full = static.A + N_full
    if alpha:
        F_full = F_full + (alpha / dt) * static.M_rho
    F_full = F_full.tocsr()

    free, bd = disc.free_vel, disc.dirichlet_vel
    ubd = disc.boundary_values()[bd] if lid else np.zeros(bd.size)
    rhs_u = -(F_full[free][:, bd] @ ubd)
    if alpha and u_old is not None:
        rhs_u = rhs_u + (alpha / dt) * (static.M_rho @ np.asarray(u_old))[free]
    rhs_p = project_constant(-(static.B[:, bd] @ ubd), disc.constant_pressure)

    def sub(X):
        return X[free][:, free].tocsr()

    return SaddleSystem(disc, sub(static.A), sub(N_full), sub(static.M_rho),
                        static.B[:, free].tocsr(), static.C.tocsr(), alpha, float(dt),
                        rhs_u, rhs_p, wind, has_lid=lid)


@dataclass
class PressureOperators:
    """Pressure-space operators and velocity-side diagonal scalings.

    ``Mp``, ``Ap`` and ``Np`` are keyed by coefficient weight name.
    """

    disc: MixedDiscretization
    Mp: dict = field(default_factory=dict)
    Ap: dict = field(default_factory=dict)
    Np: dict = field(default_factory=dict)
    T: np.ndarray | None = None
    T_mu: np.ndarray | None = None
    D_max: np.ndarray | None = None
    D_diag: np.ndarray | None = None


def assemble_pressure_operators(disc: MixedDiscretization, wind=None, F=None,
                                static: StaticBlocks | None = None) -> PressureOperators:
    """All weighted pressure operators plus the LSC velocity scalings."""
    static = static or assemble_static(disc)
    free = disc.free_vel
    ops = PressureOperators(disc)
    for w in ("one", "rho", "inv2mu", "inv_mu"):
        ops.Mp[w] = assemble_pressure_mass(disc, w)
    for w in ("one", "inv_rho", "mu"):
        ops.Ap[w] = assemble_pressure_laplacian(disc, w)
    update_pressure_convection(ops, wind)
    ops.T = static.M_one.diagonal()[free]
    ops.T_mu = static.M_mu.diagonal()[free]
    if F is not None:
        set_F_scalings(ops, F)
    return ops


def update_pressure_convection(ops: PressureOperators, wind) -> None:
    disc = ops.disc
    n = disc.n_pre_dofs
    for w in ("one", "rho"):
        if wind is None or not np.any(wind):
            ops.Np[w] = sp.csr_matrix((n, n))
        else:
            ops.Np[w] = assemble_pressure_convection(disc, wind, w)


def set_F_scalings(ops: PressureOperators, F) -> None:
    """D_max[i] = max_j |F_ij| and diag(F), used by LSC_D and SIMPLE."""
    F = sp.csr_matrix(F)
    ops.D_max = np.asarray(abs(F).max(axis=1).todense()).ravel()
    ops.D_diag = F.diagonal()


def build_Fp(ops: PressureOperators, alpha: int, dt: float, weight_convection: str = "rho",
             weight_mass: str = "rho", weight_diffusion: str = "mu"):
    """F_p = A_p^(mu) + N_p^(wc) + (alpha/dt) M_p^(wm)."""
    Fp = ops.Ap[weight_diffusion] + ops.Np[weight_convection]
    if alpha:
        Fp = Fp + (alpha / dt) * ops.Mp[weight_mass]
    return Fp.tocsr()


def dump_matrices(directory, system: SaddleSystem, ops: PressureOperators | None = None) -> list:
    """Write the system blocks (and pressure operators) as MatrixMarket files."""
    os.makedirs(directory, exist_ok=True)
    mats = {"F": system.F, "B": system.B, "C": system.C,
            "A": system.A_mu, "N": system.N_rho, "M": system.M_rho}
    if ops is not None:
        for prefix, group in (("Mp", ops.Mp), ("Ap", ops.Ap), ("Np", ops.Np)):
            for w, X in group.items():
                mats[f"{prefix}_{w}"] = X
    written = []
    for name, X in mats.items():
        path = os.path.join(directory, f"{name}.mtx")
        scipy.io.mmwrite(path, sp.coo_matrix(X))
        written.append(path)
    np.savetxt(os.path.join(directory, "rhs.txt"), system.rhs)
    return written
