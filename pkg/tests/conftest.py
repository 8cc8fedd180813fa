import numpy as np
import pytest
from hypothesis import settings

from hyperstokes.fields import HarmonicSpec
from hyperstokes.hypgeom import DomainSpec
from hyperstokes.mesh import build_annulus_grid
from hyperstokes.navierstokes import ingredients
from hyperstokes.stokes import assemble_solution, full_pressure, solve_stokes, stokes_rhs

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

STANDARD = DomainSpec(1.0, 1.0)
UNIT = HarmonicSpec(1, 1.0)


def stokes_run(N, R_max=12.0, spec=STANDARD, harmonic=UNIT, N_th=None):
    g = build_annulus_grid(spec, spec.R0, R_max, N, N_th or N)
    F, dF, eta, w = ingredients(spec, harmonic, g)
    T = stokes_rhs(eta, dF, w, g)
    wt, P, rep = solve_stokes(g, T)
    u = assemble_solution(eta, dF, w, wt)
    return dict(grid=g, F=F, dF=dF, eta=eta, w=w, T=T, w_tilde=wt, P=P,
                p=full_pressure(P, F), u=u, report=rep, spec=spec, harmonic=harmonic)


@pytest.fixture(scope="session")
def run64():
    return stokes_run(64)


@pytest.fixture(scope="session")
def run128():
    return stokes_run(128)


@pytest.fixture(scope="session")
def run256():
    return stokes_run(256)


@pytest.fixture(scope="session")
def run512():
    return stokes_run(512)


@pytest.fixture(scope="session")
def small_grid():
    return build_annulus_grid(STANDARD, 1.0, 6.0, 40, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance summary

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


@pytest.fixture
def criterion():
    """Record one criterion: ``criterion(k, title, ok, detail)`` then assert ``ok``."""
    def record(k, title, ok, detail):
        line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE[k] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
