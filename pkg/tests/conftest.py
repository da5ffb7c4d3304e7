import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from freeprim.grid import Grid, GridSpec

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """``report(name, ok, detail)`` records one PASS/FAIL line for the summary."""
    lines = request.config.stash[ACCEPTANCE]

    def report(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


@pytest.fixture(scope="session")
def grid16():
    return Grid(GridSpec(nx=16, ny=16, nz=9))


@pytest.fixture(scope="session")
def grid32():
    return Grid(GridSpec(nx=32, ny=32, nz=17))


def lowpass(grid, rng, nmax=3, lead=()):
    """Random real field with Fourier content only for ``|n| <= nmax``."""
    shape = lead + grid.ksq.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    band = grid.n1**2 + grid.n2**2 <= nmax**2
    return grid.ifft(c * band)


def poly_profile(grid, coeffs):
    """Polynomial in ``x3`` broadcast to the volume."""
    return np.polyval(coeffs, grid.z)[:, None, None] * np.ones(grid.volume_shape)
