import warnings

import numpy as np
import pytest

from twophase_pcd.assembly import assemble_pressure_operators, assemble_saddle_system, assemble_static
from twophase_pcd.grid import build_discretization, build_grid, grid_from_h

AIR_WATER = (1.2e-3, 1.8e-2)


def make_disc(pair, n=8, rho_ratio=1.0, mu_ratio=1.0, reynolds=1.0, **kw):
    return build_discretization(build_grid(n, rho_ratio, mu_ratio, reynolds, **kw), pair)


def lid_wind(disc, static=None):
    """Velocity of the Stokes lid flow, used as a realistic Picard wind."""
    from twophase_pcd.krylov import sparse_factorize
    import scipy.sparse as sp

    system = assemble_saddle_system(disc, None, static=static)
    K = system.K().tolil()
    # pin one pressure to make the Stokes matrix nonsingular
    k = system.n_u + int(np.flatnonzero(disc.constant_pressure)[0])
    K[k, :] = 0
    K[k, k] = 1.0
    b = system.rhs.copy()
    b[k] = 0.0
    x = sparse_factorize(sp.csr_matrix(K))(b)
    return system.full_velocity(x[:system.n_u])


@pytest.fixture(autouse=True)
def _quiet_ratio_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="rho_ratio > mu_ratio")
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def oseen_setup(pair, n=8, rho_ratio=1.0, mu_ratio=1.0, reynolds=10.0, alpha=0, dt=1.0,
                with_wind=True):
    disc = make_disc(pair, n, rho_ratio, mu_ratio, reynolds)
    static = assemble_static(disc)
    wind = lid_wind(disc, static) if with_wind else None
    system = assemble_saddle_system(disc, wind, alpha, dt, static)
    ops = assemble_pressure_operators(disc, wind, system.F, static)
    return disc, system, ops


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""
    return pytestconfig.stash[ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
