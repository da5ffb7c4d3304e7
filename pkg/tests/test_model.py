import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeprim.geometry import build_metric, laplacian
from freeprim.grid import Grid, GridSpec
from freeprim.model import (
    State,
    boundary_residuals,
    compatibility_check,
    coriolis,
    divergence_residual,
    linear_part,
    make_state,
    momentum_rhs,
    neumann_G3,
    nonlinear_G,
    pressure,
    reconstruct_w,
    surface_rhs,
    top_normal_flux,
)
from freeprim.stepper import enforce_top_bc

from conftest import lowpass


def _random_state(g, seed, amp_z=0.01, amp_v=0.1, f=None):
    rng = np.random.default_rng(seed)
    z = lowpass(g, rng, 1.5)
    z -= z.mean()
    z *= amp_z / np.abs(z).max()
    s = 1 + g.z / g.b
    v = lowpass(g, rng, 3, lead=(2,)) [:, None] * (s * (2 - s))[None, :, None, None]
    v *= amp_v / np.abs(v).max()
    v = enforce_top_bc(g, v, z, build_metric(g, z).J[0])
    v[:, -1] = 0
    return v, z


def test_w_for_flat_shear(grid16):
    # v1 = sin(2 pi x1) q(x3), q = x3 + 1  ->  w = -2 pi cos(2 pi x1) (x3 + 1)^2 / 2
    g = grid16
    v = np.zeros((2,) + g.volume_shape)
    q = (g.z + 1.0)[:, None, None]
    v[0] = np.sin(2 * np.pi * g.X1) * q
    w = reconstruct_w(g, v, build_metric(g, np.zeros(g.surface_shape)))
    np.testing.assert_allclose(w, -np.pi * np.cos(2 * np.pi * g.X1) * q**2, atol=1e-12)


def test_w_vanishes_at_bottom(grid16):
    v, z = _random_state(grid16, 0)
    w = reconstruct_w(grid16, v, build_metric(grid16, z))
    assert np.abs(w[-1]).max() == 0.0


def test_pressure_is_hydrostatic():
    g = Grid(GridSpec(nx=8, ny=8, nz=5, g=2.0, P0=1.5))
    z = 0.1 * np.cos(2 * np.pi * g.X1)
    P = pressure(g, z)
    np.testing.assert_allclose(P, np.broadcast_to(1.5 + 2.0 * z, g.volume_shape))


def test_coriolis_is_rotation():
    v = np.array([[1.0], [2.0]])
    np.testing.assert_array_equal(coriolis(0.5, v), [[-1.0], [0.5]])


def test_zero_state_is_stationary(grid16):
    s = make_state(grid16, np.zeros((2,) + grid16.volume_shape), np.zeros(grid16.surface_shape))
    assert np.abs(s.dt_v).max() == 0.0 and np.abs(s.dt_zeta).max() == 0.0


def test_flat_rest_state_with_surface_feels_gravity(grid16):
    g = grid16
    z = 0.01 * np.cos(2 * np.pi * g.X1)
    s = make_state(g, np.zeros((2,) + g.volume_shape), z)
    np.testing.assert_allclose(s.dt_v[0], 0.01 * 2 * np.pi * np.sin(2 * np.pi * g.X1)[None] * np.ones((g.nz, 1, 1)), atol=1e-14)
    np.testing.assert_array_equal(s.dt_zeta, 0.0)


def test_shape_validation(grid16):
    with pytest.raises(ValueError):
        make_state(grid16, np.zeros((2, 3, 16, 16)), np.zeros((16, 16)))
    with pytest.raises(ValueError):
        make_state(grid16, np.zeros((2,) + grid16.volume_shape), np.zeros((8, 8)))


@given(st.integers(0, 2**32 - 1))
def test_mass_rate_vanishes(seed):
    # d/dt int zeta = 0 for every state (conservative flux form)
    g = Grid(GridSpec(nx=16, ny=16, nz=9))
    v, z = _random_state(g, seed)
    s = make_state(g, v, z)
    assert abs(surface_rhs(g, s).mean()) <= 1e-14 * max(np.abs(s.dt_zeta).max(), 1e-3)


@given(st.integers(0, 2**32 - 1))
def test_splitting_identity(seed):
    g = Grid(GridSpec(nx=16, ny=16, nz=9, f=0.3))
    v, z = _random_state(g, seed)
    s = make_state(g, v, z)
    G1, G2, G3, G4 = nonlinear_G(g, s)
    np.testing.assert_allclose(s.dt_v, linear_part(g, s) + G1, atol=1e-10 * np.abs(s.dt_v).max())
    # kinematic split: dt zeta = w_top + G4
    np.testing.assert_allclose(s.dt_zeta, s.w[0] + G4, atol=1e-15)
    # divergence split: div v + d3 w = G2 (up to the Chebyshev error of the metric)
    div = g.dx(v[0]) + g.dy(v[1])
    r = div + g.vertical_diff(s.w) - G2
    assert np.abs(r).max() <= 1e-3 * np.abs(div).max()


def test_neumann_G3_equivalent_to_top_bc(grid16):
    g = grid16
    v, z = _random_state(g, 3)
    s = make_state(g, v, z)
    # top BC holds, so d3 v on top equals G3
    d3v_top = g.vertical_diff(v)[:, 0]
    np.testing.assert_allclose(d3v_top, neumann_G3(g, s), atol=1e-12)


def test_boundary_residuals_and_top_projection(grid16):
    v, z = _random_state(grid16, 4)
    s = make_state(grid16, v, z)
    top, bottom = boundary_residuals(grid16, s)
    assert np.abs(top).max() < 1e-13
    assert np.abs(bottom).max() == 0.0


def test_divergence_residual_small_for_smooth_state():
    g = Grid(GridSpec(nx=16, ny=16, nz=33))
    v, z = _random_state(g, 5, amp_z=1e-3)
    s = make_state(g, v, z)
    assert divergence_residual(g, s) < 1e-6


def test_momentum_rhs_matches_state(grid16):
    v, z = _random_state(grid16, 6)
    s = make_state(grid16, v, z)
    np.testing.assert_allclose(momentum_rhs(grid16, s), s.dt_v, atol=1e-12)


def test_compatibility_pass_and_fail(grid16):
    g = grid16
    v, z = _random_state(g, 7)
    rep = compatibility_check(g, v, z, order=1, tol=1e-8)
    assert rep.residuals["top_0"] < 1e-12 and rep.residuals["bottom_0"] == 0.0
    assert "top_1" in rep.residuals and "top_2" in rep.informational
    bad = v.copy()
    bad[:, -1] = 1e-3
    rep = compatibility_check(g, bad, z, order=0, tol=1e-8)
    assert not rep.passed and rep.residuals["bottom_0"] == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        compatibility_check(g, v, z, order=2)


def test_order1_top_residual_matches_taylor_difference(grid16):
    g = grid16
    v, z = _random_state(g, 8)
    s = make_state(g, v, z)
    rep = compatibility_check(g, v, z, order=1, tol=1.0)
    h = 1e-5
    flux = []
    for sgn in (1, -1):
        vp, zp = v + sgn * h * s.dt_v, z + sgn * h * s.dt_zeta
        flux.append(top_normal_flux(g, vp, zp, build_metric(g, zp)))
    fd = np.abs((flux[0] - flux[1]) / (2 * h)).max()
    assert rep.residuals["top_1"] == pytest.approx(fd, rel=1e-3, abs=1e-8)


def test_state_is_dataclass_with_cached_spectrum(grid16):
    v, z = _random_state(grid16, 9)
    s = make_state(grid16, v, z)
    assert isinstance(s, State)
    np.testing.assert_allclose(grid16.ifft(s.v_hat), s.v, atol=1e-15)
    assert np.allclose(laplacian(grid16, v), laplacian(grid16, s.v))
