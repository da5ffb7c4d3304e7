import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeprim.diagnostics import (
    SERIES_COLUMNS,
    DiagnosticsRecord,
    Recorder,
    decay_fit,
    energy_inequality_monitor,
    estimate_time_derivatives,
    functional_D,
    functional_E,
    functional_F,
    functional_G,
    negative_norm,
    negative_norm_volume,
    record_row,
)
from freeprim.grid import Grid, GridSpec, PreconditionError
from freeprim.model import make_state
from freeprim.stepper import StepperConfig, run

K = 2 * np.pi


def _hist(fn, dt, t0=0.0):
    return [SimpleNamespace(t=t0 + i * dt, dt_v=fn(t0 + i * dt), dt_zeta=fn(t0 + i * dt)) for i in range(3)]


def test_time_derivatives_exact_on_quadratics():
    dt = 0.1
    fn = lambda t: np.array([1.0 + 2 * t + 3 * t * t])  # noqa: E731
    for at in (0, 1, 2):
        h = estimate_time_derivatives(_hist(fn, dt), dt, at=at)
        assert h.dt2_zeta[0] == pytest.approx(2 + 6 * (at * dt), rel=1e-12)
        assert h.dt3_zeta[0] == pytest.approx(6.0, rel=1e-10)


def test_time_derivative_validity_flag():
    dt = 0.1
    smooth = estimate_time_derivatives(_hist(lambda t: np.array([t]), dt), dt)
    assert smooth.valid and smooth.spread < 1e-12
    rough = estimate_time_derivatives(_hist(lambda t: np.array([math.cos(40 * t)]), dt), dt)
    assert not rough.valid


def test_time_derivative_preconditions():
    dt = 0.1
    h = _hist(lambda t: np.array([t]), dt)
    with pytest.raises(PreconditionError):
        estimate_time_derivatives(h[:2], dt)
    h[2].t = 0.35
    with pytest.raises(PreconditionError):
        estimate_time_derivatives(h, dt)


@pytest.fixture(scope="module")
def bump():
    g = Grid(GridSpec(nx=16, ny=16, nz=9))
    eps = 1e-3
    s = make_state(g, np.zeros((2,) + g.volume_shape), eps * np.cos(K * g.X1))
    return g, s, eps


def test_energy_of_rest_state_with_bump(bump):
    # v = 0, dt zeta = 0, dt v = -g grad zeta (depth independent)
    g, s, eps = bump
    k2 = K**2
    zeta4 = eps * math.sqrt((1 + k2) ** 4 / 2)
    dtv2 = eps * K * math.sqrt((1 + k2 + k2**2) / 2)
    assert functional_E(g, s) == pytest.approx(zeta4 + dtv2, rel=1e-12)
    assert functional_F(g, s) == pytest.approx(eps * K * math.sqrt((1 + k2) ** 3.5 / 2), rel=1e-12)
    # D without second derivatives: |grad zeta|_3 + ||dt v||_3
    dtv3 = eps * K * math.sqrt((1 + k2 + k2**2 + k2**3) / 2)
    assert functional_D(g, s) == pytest.approx(eps * K * math.sqrt((1 + k2) ** 3 / 2) + dtv3, rel=1e-12)


def test_functionals_zero_state():
    g = Grid(GridSpec(nx=8, ny=8, nz=5))
    s = make_state(g, np.zeros((2,) + g.volume_shape), np.zeros(g.surface_shape))
    assert functional_E(g, s) == functional_D(g, s) == functional_F(g, s) == 0.0


def test_strict_mode(bump):
    g, s, _ = bump
    with pytest.raises(PreconditionError):
        functional_E(g, s, None, strict=True)


def test_negative_norm_single_mode(grid16):
    g = grid16
    for gamma in (0.25, 0.5, 0.9):
        assert negative_norm(g, np.cos(K * g.X1), gamma) == pytest.approx(K**-gamma / math.sqrt(2), rel=1e-12)
    with pytest.raises(PreconditionError):
        negative_norm(g, np.ones(g.surface_shape), 0.5)
    with pytest.raises(ValueError):
        negative_norm(g, np.cos(K * g.X1), 1.5)


def test_negative_norm_volume(grid16):
    g = grid16
    v = np.cos(K * g.X1)[None] * np.ones((g.nz, 1, 1))
    assert negative_norm_volume(g, v, 0.5) == pytest.approx(K**-0.5 / math.sqrt(2), rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 0.9))
def test_negative_norm_bounded_by_l2_times_lowest_mode(seed, gamma):
    g = Grid(GridSpec(nx=8, ny=8, nz=5))
    f = np.random.default_rng(seed).standard_normal(g.surface_shape)
    f -= f.mean()
    assert negative_norm(g, f, gamma) <= K**-gamma * g.surface_norm(f, 0) * (1 + 1e-12)


def _records(t, E, D):
    return [DiagnosticsRecord(t=a, E=b, D=c, F=0, mass=0, min_J=1, div_residual=0, top_bc_residual=0,
                              bottom_bc_residual=0) for a, b, c in zip(t, E, D)]


def test_monitor_recovers_theta():
    t = np.linspace(0, 5, 501)
    E = np.exp(-t)
    rep = energy_inequality_monitor(_records(t, E, E))
    assert rep.ok
    assert rep.theta_hat == pytest.approx(2.0, rel=1e-3)


def test_monitor_flags_growth():
    t = np.linspace(0, 1, 11)
    E = np.exp(-t)
    E[5] *= 1.3
    rep = energy_inequality_monitor(_records(t, E, E))
    assert rep.violations == [4] and rep.theta_hat == 0.0
    with pytest.raises(PreconditionError):
        energy_inequality_monitor(_records([0.0], [1.0], [1.0]))


def test_functional_G():
    t = np.linspace(0, 1, 101)
    recs = _records(t, np.exp(-t), np.ones_like(t))
    assert functional_G(recs) == pytest.approx(1.0 + 1.0, rel=1e-12)
    assert functional_G(recs, T=0.5) == pytest.approx(1.0 + 0.5, rel=1e-12)


@given(st.floats(0.01, 5.0), st.floats(-3, 3))
def test_decay_fit_exponential(rate, c):
    t = np.linspace(0, 10, 50)
    fit = decay_fit(t, np.exp(c - rate * t))
    assert fit.rate == pytest.approx(rate, rel=1e-9) and fit.r2 == pytest.approx(1.0)
    assert fit.n_points == int(np.sum(t >= 1.0 - 1e-12))


def test_decay_fit_algebraic_and_errors():
    t = np.linspace(0, 10, 50)
    fit = decay_fit(t, (1 + t) ** -0.25, model="algebraic")
    assert fit.rate == pytest.approx(0.25, rel=1e-10)
    with pytest.raises(PreconditionError):
        decay_fit(t, -np.ones_like(t))
    with pytest.raises(ValueError):
        decay_fit(t, np.ones_like(t), model="power")


def test_record_row_matches_columns():
    r = _records([0.0], [1.0], [2.0])[0]
    assert len(record_row(r)) == len(SERIES_COLUMNS)
    assert SERIES_COLUMNS[0] == "t" and SERIES_COLUMNS[-1] == "neg_norm_zeta"


def test_recorder_schedule():
    g = Grid(GridSpec(nx=8, ny=8, nz=9))
    s = make_state(g, np.zeros((2,) + g.volume_shape), 1e-3 * np.cos(K * g.X1))
    rec = Recorder(g, 1e-2, every=3, gamma=0.5)
    run(g, s, StepperConfig(dt=1e-2, t_max=0.09), sink=rec)
    recs = rec.finish()
    np.testing.assert_allclose([r.t for r in recs], [0.0, 0.03, 0.06, 0.09], atol=1e-12)
    assert all(np.isfinite(r.neg_norm_zeta) for r in recs)
    assert np.isnan(recs[0].wave_residual_rel) and np.isnan(recs[-1].wave_residual_rel)
    assert all(np.isfinite(r.wave_residual_rel) for r in recs[1:-1])


def test_recorder_short_runs():
    g = Grid(GridSpec(nx=8, ny=8, nz=9))
    s = make_state(g, np.zeros((2,) + g.volume_shape), 1e-3 * np.cos(K * g.X1))
    rec = Recorder(g, 1e-2)
    run(g, s, StepperConfig(dt=1e-2, t_max=0.0), sink=rec)
    recs = rec.finish()
    assert len(recs) == 1 and not recs[0].complete
