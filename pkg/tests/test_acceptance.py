"""Acceptance criteria for the cavity solver.

Each test prints one ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line (also collected into the pytest terminal summary).  The solver runs are
cached per module, so cells shared between criteria are solved once.  The
whole module takes on the order of an hour on one core.
"""
import logging
import time

import numpy as np
import pytest

import test_assembly as ta
from conftest import AIR_WATER, oseen_setup
from twophase_pcd.assembly import (assemble_convection, assemble_divergence,
                                   assemble_pressure_operators, assemble_stabilization,
                                   assemble_velocity_diffusion, assemble_velocity_mass)
from twophase_pcd.driver import CavityProblem, run_cavity
from twophase_pcd.grid import build_discretization, grid_from_h, total_dof_formula
from twophase_pcd.precond import make_schur_strategy

pytestmark = pytest.mark.slow

log = logging.getLogger(__name__)

RE_VALUES = (10.0, 10 ** 1.5, 100.0, 10 ** 2.5, 1000.0)
RE_LABELS = ("10", "10^1.5", "100", "10^2.5", "1000")


def verdict(log_lines, n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    log_lines.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def run():
    """Memoised run_cavity keyed by the problem parameters."""
    cache = {}

    def get(elements, h, re, kind="pcd2", rho=AIR_WATER[0], mu=AIR_WATER[1], alpha=0,
            dt=1.0, **kw):
        key = (elements, h, re, kind, rho, mu, alpha, dt, tuple(sorted(kw.items())))
        if key not in cache:
            p = CavityProblem(elements, h, re, rho, mu, alpha, dt, kind, **kw)
            t0 = time.perf_counter()
            r = run_cavity(p)
            log.info("%s h=%s re=%g %s rho=%g mu=%g dt=%g: avg %.2f, %d picard, %.0fs",
                     elements, h, re, kind, rho, mu, dt, r.avg_gmres, r.picard_steps,
                     time.perf_counter() - t0)
            cache[key] = r
        return cache[key]
    return get


def cell(r):
    """Rounded average with a marker when Picard stopped early."""
    return f"{r.avg_gmres_rounded}" + ("" if r.converged else "(nc)")


# -- 1 ----------------------------------------------------------------------

DOF_COUNTS = {
    "Q2Q1": {16: 9027, 32: 36483, 64: 146691, 128: 588291, 256: 2356227},
    "Q2Pm1": {16: 11010, 32: 44546, 64: 179202, 128: 718850, 256: 2879490},
    "Q1Q1": {32: 12163, 64: 48899, 128: 196099, 256: 785411, 512: 3143683},
}


def test_criterion_1_dof_counts(acceptance_log):
    t0 = time.perf_counter()
    bad = []
    for pair, levels in DOF_COUNTS.items():
        for k, expected in levels.items():
            got = build_discretization(grid_from_h(1 / k), pair).total_dofs
            if got != expected or total_dof_formula(pair, 1 / k) != expected:
                bad.append(f"{pair} h=1/{k}: {got} != {expected}")
    dt = time.perf_counter() - t0
    verdict(acceptance_log, 1, not bad,
            f"15 DOF counts, {15 - len(bad)} exact ({dt:.2f}s)" + ("; " + "; ".join(bad) if bad else ""))


# -- 2 ----------------------------------------------------------------------

T2_COARSE = {
    (1 / 16, "pcd2"): (17, 20, 24, 28, 37),
    (1 / 16, "lsc2"): (15, 19, 23, 27, 37),
    (1 / 16, "lsc_d"): (28, 30, 32, 37, 51),
    (1 / 32, "pcd2"): (19, 21, 25, 29, 35),
}


def t2_tolerance(kind, expected):
    return 3 if kind == "pcd2" else max(5, 0.2 * expected)


def test_criterion_2_t2_coarse_rows(run, acceptance_log):
    parts, bad = [], []
    for (h, kind), expected in T2_COARSE.items():
        got = []
        for re, label, e in zip(RE_VALUES, RE_LABELS, expected):
            r = run("Q2Q1", h, re, kind)
            got.append(cell(r))
            dev = r.avg_gmres_rounded - e
            if abs(dev) > t2_tolerance(kind, e):
                bad.append(f"h=1/{round(1 / h)} {kind} Re={label} {dev:+d}")
        parts.append(f"h=1/{round(1 / h)} {kind} {'/'.join(got)} vs {'/'.join(map(str, expected))}")
    verdict(acceptance_log, 2, not bad,
            "; ".join(parts) + (f"; out of tolerance: {', '.join(bad)}" if bad else ""))


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_mesh_robustness(run, acceptance_log):
    counts = [run("Q2Q1", h, 100.0).avg_gmres_rounded for h in (1 / 16, 1 / 32, 1 / 64)]
    ok = all(b >= a for a, b in zip(counts, counts[1:])) and counts[-1] - counts[0] <= 4
    verdict(acceptance_log, 3, ok,
            f"pcd2 Re=100 over h=1/16,1/32,1/64: {' -> '.join(map(str, counts))} "
            f"(nondecreasing, total increase {counts[-1] - counts[0]} <= 4)")


# -- 4 ----------------------------------------------------------------------

RATIOS = (1e-3, 1e-2, 1e-1, 1.0)


def test_criterion_4_coefficient_robustness(run, acceptance_log):
    pts = [(rho, mu) for mu in RATIOS for rho in RATIOS if rho <= mu]
    spread = {}
    for kind in ("pcd2", "pcd"):
        avgs = [run("Q2Q1", 1 / 32, 100.0, kind, rho, mu).avg_gmres for rho, mu in pts]
        spread[kind] = (max(avgs) / min(avgs), min(avgs), max(avgs))
    ok = spread["pcd2"][0] <= 2.5 and spread["pcd"][0] > 4
    verdict(acceptance_log, 4, ok,
            f"h=1/32 Re=100 over {len(pts)} (rho, mu) cells: pcd2 max/min "
            f"{spread['pcd2'][2]:.1f}/{spread['pcd2'][1]:.1f} = {spread['pcd2'][0]:.2f} (<= 2.5), "
            f"pcd {spread['pcd'][2]:.1f}/{spread['pcd'][1]:.1f} = {spread['pcd'][0]:.2f} (> 4)")


# -- 5, 6 -------------------------------------------------------------------

def _pair_row(run, pair, h, expected, tol):
    got, bad = [], []
    for re, label, e in zip(RE_VALUES, RE_LABELS, expected):
        r = run(pair, h, re)
        got.append(cell(r))
        dev = r.avg_gmres_rounded - e
        if abs(dev) > tol(e):
            bad.append(f"Re={label} {dev:+d}")
    return (f"{pair} h=1/{round(1 / h)} pcd2 {'/'.join(got)} vs {'/'.join(map(str, expected))}"
            + (f"; out of tolerance: {', '.join(bad)}" if bad else "")), not bad


def test_criterion_5_q1q1(run, acceptance_log):
    detail, ok = _pair_row(run, "Q1Q1", 1 / 32, (16, 18, 22, 27, 44), lambda e: 3)
    verdict(acceptance_log, 5, ok, detail + " (tol 3)")


def test_criterion_6_q2pm1(run, acceptance_log):
    detail, ok = _pair_row(run, "Q2Pm1", 1 / 16, (17, 21, 27, 38, 73),
                           lambda e: max(5, 0.25 * e))
    verdict(acceptance_log, 6, ok, detail + " (tol max(5, 25%))")


# -- 7 ----------------------------------------------------------------------

def test_criterion_7_time_dependent_trend(run, acceptance_log):
    parts, bad = [], []
    for re, label, strict in ((10.0, "10", False), (10 ** 2.5, "10^2.5", True),
                              (1000.0, "1000", True)):
        small = run("Q2Q1", 1 / 32, re, alpha=1, dt=0.1).avg_gmres_rounded
        large = run("Q2Q1", 1 / 32, re, alpha=1, dt=10.0).avg_gmres_rounded
        ok = small < large if strict else small <= large
        parts.append(f"Re={label} dt=0.1: {small} {'<' if strict else '<='} dt=10: {large}")
        if not ok:
            bad.append(label)
    verdict(acceptance_log, 7, not bad, "h=1/32 pcd2 " + "; ".join(parts))


# -- 8 ----------------------------------------------------------------------

def test_criterion_8_exact_schur(run, acceptance_log):
    worst = {}
    for pair in ("Q2Q1", "Q1Q1", "Q2Pm1"):
        for h in (1 / 4, 1 / 8):
            r = run(pair, h, 100.0, "exact", bootstrap_kind="exact")
            worst[(pair, h)] = max([r.stokes_gmres, *r.gmres_counts])
    ok = all(v <= 2 for v in worst.values())
    detail = ", ".join(f"{p} h=1/{round(1 / h)}: {v}" for (p, h), v in worst.items())
    verdict(acceptance_log, 8, ok, f"max GMRES iterations with exact Schur ({detail}) <= 2")


# -- 9 ----------------------------------------------------------------------

def _identity_error(pair, a, b, setup, rng):
    _, system, ops = oseen_setup(pair, 8, **setup)
    Sa = make_schur_strategy(a, system, ops)
    Sb = make_schur_strategy(b, system, ops)
    err = 0.0
    for _ in range(5):
        v = rng.standard_normal(system.n_p)
        x, y = Sa(v), Sb(v)
        err = max(err, np.linalg.norm(x - y) / np.linalg.norm(y))
    return err


def test_criterion_9_reduction_identities(acceptance_log):
    rng = np.random.default_rng(2024)
    aw = dict(rho_ratio=AIR_WATER[0], mu_ratio=AIR_WATER[1], reynolds=100.0)
    cases = [
        ("pcd2", "gcc", dict(aw, alpha=1, dt=0.1, with_wind=False), ("Q2Q1", "Q1Q1", "Q2Pm1")),
        ("pcd2_rho", "pcd2", dict(rho_ratio=1.0, mu_ratio=1e-2, reynolds=10.0, alpha=1, dt=0.5),
         ("Q2Q1", "Q1Q1", "Q2Pm1")),
        ("lsc2", "lsc", dict(rho_ratio=1e-2, mu_ratio=1.0, reynolds=10.0), ("Q2Q1", "Q2Pm1")),
        ("pcd", "cc", dict(reynolds=10.0, alpha=1, dt=0.1, with_wind=False),
         ("Q2Q1", "Q1Q1", "Q2Pm1")),
    ]
    worst = {}
    for a, b, setup, pairs in cases:
        worst[f"{a}={b}"] = max(_identity_error(p, a, b, setup, rng) for p in pairs)
    ok = all(e < 1e-10 for e in worst.values())
    verdict(acceptance_log, 9, ok, "h=1/8 max relative differences: "
            + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (< 1e-10)")


# -- 10 ---------------------------------------------------------------------

ORACLE_CHECKS = [
    (ta.test_q1_element_mass_closed_form, [()]),
    (ta.test_q1_element_stabilization_closed_form, [()]),
    (ta.test_q1_pressure_laplacian_interior_stencil, [()]),
    (ta.test_pm1_centroid_stencil, [()]),
    (ta.test_pm1_stencil_averages_density_on_interface, [()]),
    (ta.test_velocity_mass_oracle, [(p,) for p in ta.PAIRS]),
    (ta.test_velocity_diffusion_oracle, [(p,) for p in ta.PAIRS]),
    (ta.test_velocity_convection_oracle, [(p, "rng") for p in ta.PAIRS]),
    (ta.test_divergence_oracle, [(p,) for p in ta.PAIRS]),
    (ta.test_pressure_mass_oracle,
     [(p, w) for p in ta.PAIRS for w in ("one", "rho", "inv2mu", "inv_mu")]),
    (ta.test_stabilization_oracle, [()]),
    (ta.test_q1_pressure_laplacian_oracle,
     [(p, w) for p in ("Q2Q1", "Q1Q1") for w in ("one", "inv_rho", "mu")]),
    (ta.test_q1_pressure_convection_oracle, [(p, "rng") for p in ("Q2Q1", "Q1Q1")]),
    (ta.test_q1_pressure_convection_single_element_unit_wind, [()]),
]

# every (pair, h) solved above
GRIDS_USED = {
    "Q2Q1": (1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64),
    "Q1Q1": (1 / 4, 1 / 8, 1 / 32),
    "Q2Pm1": (1 / 4, 1 / 8, 1 / 16),
}


def _invariant_failures(pair, h, rng):
    disc = build_discretization(grid_from_h(h, *AIR_WATER, 100.0), pair)
    out = []
    tol = 1e-10
    nv = disc.n_vel_nodes
    c = disc.constant_pressure
    wind = rng.standard_normal(disc.n_vel_dofs)
    A = assemble_velocity_diffusion(disc)
    M = assemble_velocity_mass(disc, "rho")
    C = assemble_stabilization(disc)
    B = assemble_divergence(disc).tocsr()
    ops = assemble_pressure_operators(disc, wind)
    sym = {"A": A, "M": M, "C": C, **{f"Mp[{w}]": X for w, X in ops.Mp.items()},
           **{f"Ap[{w}]": X for w, X in ops.Ap.items()}}
    for name, X in sym.items():
        if abs(X - X.T).max() > 1e-14 * max(abs(X).max(), 1.0):
            out.append(f"{name} not symmetric")
    const = np.concatenate([np.full(nv, 0.3), np.full(nv, -1.1)])
    rotation = np.concatenate([-disc.vel_coords[:, 1], disc.vel_coords[:, 0]])
    null = {
        "A const": A @ const, "A rotation": A @ rotation,
        "N const": assemble_convection(disc, wind) @ const,
        "B^T c": B[:, disc.free_vel].T @ c, "C c": C @ c,
        **{f"Ap[{w}] c": X @ c for w, X in ops.Ap.items()},
        **{f"Np[{w}] c": X @ c for w, X in ops.Np.items()},
    }
    for name, v in null.items():
        if np.abs(v).max() > tol:
            out.append(f"{name} = {np.abs(v).max():.1e}")
    return out


def test_criterion_10_assembly_oracles(acceptance_log):
    failures, n_oracle = [], 0
    for fn, arglists in ORACLE_CHECKS:
        for args in arglists:
            args = tuple(np.random.default_rng(12345) if a == "rng" else a for a in args)
            n_oracle += 1
            try:
                fn(*args)
            except AssertionError as exc:
                failures.append(f"{fn.__name__}{args[:1]}: {exc}")
    rng = np.random.default_rng(7)
    n_grid = 0
    for pair, hs in GRIDS_USED.items():
        for h in hs:
            n_grid += 1
            failures += [f"{pair} h={h:g}: {m}" for m in _invariant_failures(pair, h, rng)]
    verdict(acceptance_log, 10, not failures,
            f"{n_oracle} element-matrix oracle checks at 1e-12, nullspace and symmetry "
            f"invariants on {n_grid} (pair, h) grids"
            + (f"; failures: {'; '.join(failures)}" if failures else ""))
