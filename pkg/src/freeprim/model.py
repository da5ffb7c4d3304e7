"""The flattened free-surface primitive equations.

Unknowns are the horizontal velocity ``v`` on the slab and the surface
elevation ``zeta``.  Everything else is diagnosed from them:

* hydrostatic pressure ``P = P0 + g zeta`` (independent of depth),
* vertical velocity ``w = -int_{-b}^{x3} J div_A v``,
* surface rate ``dt zeta = w|_top - v|_top . grad zeta`` (kinematic condition),
* momentum rate
  ``dt v = dt_theta K d3 v - v.grad_A v - w K d3 v + Lap_A v - g grad zeta - f k x v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from freeprim.geometry import (
    MetricCache,
    bar_derivatives,
    build_metric,
    derivative_bundle,
    div_Astar,
    laplacian,
    with_rate,
)
from freeprim.grid import Grid


@dataclass
class State:
    """Prognostic fields at one time level plus everything derived from them."""

    t: float
    v: np.ndarray
    zeta: np.ndarray
    w: np.ndarray
    P: np.ndarray
    dt_v: np.ndarray
    dt_zeta: np.ndarray
    metric: MetricCache
    v_hat: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def v_top(self) -> np.ndarray:
        return self.v[:, 0]


def pressure(grid: Grid, zeta: np.ndarray) -> np.ndarray:
    """Hydrostatic pressure ``P0 + g zeta`` broadcast over all levels."""
    spec = grid.spec
    return np.broadcast_to(spec.P0 + spec.g * zeta, grid.volume_shape).copy()


def divergence_flux(grid: Grid, v: np.ndarray, m: MetricCache, conservative: bool = True) -> np.ndarray:
    """``J div_A v``.

    The conservative form ``d1(J v1) + d2(J v2) - d3(A v1 + B v2)`` (default)
    has zero horizontal mean up to a vertical derivative, so the surface mean
    of the kinematic rate vanishes identically.  The pointwise form
    ``J (d1 v1 + d2 v2) - A d3 v1 - B d3 v2`` agrees with it up to the
    collocation error of the metric products.
    """
    vh = grid.fft(v)
    if conservative:
        Jvh = grid.fft(m.J[None] * v)
        horiz = grid.ifft(1j * grid.k1 * Jvh[0] + 1j * grid.k2 * Jvh[1])
        return horiz - grid.vertical_diff(m.A * v[0] + m.B * v[1])
    div = grid.ifft(1j * grid.k1 * vh[0] + 1j * grid.k2 * vh[1])
    d3v = grid.vertical_diff(v)
    return m.J * div - m.A * d3v[0] - m.B * d3v[1]


def reconstruct_w(grid: Grid, v: np.ndarray, m: MetricCache) -> np.ndarray:
    """Vertical velocity ``-int_{-b}^{x3} J div_A v``; zero at the bottom."""
    return -grid.vertical_integral_from_bottom(divergence_flux(grid, v, m), drop_top=True)


def _kinematic_rate(grid: Grid, v_top: np.ndarray, w_top: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    gz = grid.grad_h(zeta)
    return w_top - (v_top[0] * gz[0] + v_top[1] * gz[1])


def coriolis(f: float, v: np.ndarray) -> np.ndarray:
    """``f k x v = f (-v2, v1)``."""
    return f * np.stack([-v[1], v[0]])


def advection_terms(v: np.ndarray, w: np.ndarray, m: MetricCache, bars: np.ndarray):
    """``(dt_theta K d3 v, v.grad_A v, w K d3 v)`` given ``bars = grad_A v``."""
    Kd3v = bars[2]
    return m.dt_theta * Kd3v, v[0] * bars[0] + v[1] * bars[1], w * Kd3v


def momentum_rhs(grid: Grid, s: State) -> np.ndarray:
    """Right-hand side of the horizontal momentum equation (``dt v``)."""
    return _momentum_rhs(grid, s.v, s.zeta, s.w, s.metric, s.v_hat)


def _momentum_rhs(grid, v, zeta, w, m, v_hat=None):
    spec = grid.spec
    bars, lap = derivative_bundle(grid, v, m, v_hat)
    transport, adv, vert = advection_terms(v, w, m, bars)
    gz = grid.grad_h(zeta)
    return transport - adv - vert + lap - spec.g * gz[:, None] - coriolis(spec.f, v)


def surface_rhs(grid: Grid, s: State) -> np.ndarray:
    """Kinematic surface rate ``w|_top - v|_top . grad zeta``."""
    return _kinematic_rate(grid, s.v[:, 0], s.w[0], s.zeta)


def make_state(
    grid: Grid,
    v: np.ndarray,
    zeta: np.ndarray,
    t: float = 0.0,
    j_floor: float = 0.1,
    metric: MetricCache | None = None,
    v_hat: np.ndarray | None = None,
) -> State:
    """Assemble a :class:`State` from ``(v, zeta)``.

    Order of evaluation: metric of ``zeta`` -> ``w`` -> ``dt zeta`` from the
    kinematic condition -> time-derivative metric slots -> ``dt v``.
    ``metric`` may supply an already built (rate-free) metric of ``zeta`` and
    ``v_hat`` the half spectrum of ``v``; both only save work.
    """
    v = np.asarray(v, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if v.shape != (2,) + grid.volume_shape:
        raise ValueError(f"v has shape {v.shape}, expected {(2,) + grid.volume_shape}")
    if zeta.shape != grid.surface_shape:
        raise ValueError(f"zeta has shape {zeta.shape}, expected {grid.surface_shape}")
    m = build_metric(grid, zeta, j_floor=j_floor) if metric is None else metric
    w = reconstruct_w(grid, v, m)
    dt_zeta = _kinematic_rate(grid, v[:, 0], w[0], zeta)
    m = with_rate(grid, m, dt_zeta)
    if v_hat is None:
        v_hat = grid.fft(v)
    dt_v = _momentum_rhs(grid, v, zeta, w, m, v_hat)
    return State(
        t=t, v=v, zeta=zeta, w=w, P=pressure(grid, zeta), dt_v=dt_v, dt_zeta=dt_zeta, metric=m, v_hat=v_hat
    )


def nonlinear_G(grid: Grid, s: State):
    """Nonlinear remainders of the linear splitting.

    Returns ``(G1, G2, G3, G4)`` such that

    * ``dt v = -g grad zeta + Lap v - f k x v + G1``
    * ``div v + d3 w = G2``
    * ``d3 v = G3`` on the surface
    * ``dt zeta = w + G4`` on the surface
    """
    m = s.metric
    v = s.v
    bars, lap = derivative_bundle(grid, v, m)
    transport, adv, vert = advection_terms(v, s.w, m, bars)
    G1 = transport - adv - vert + lap - laplacian(grid, v)

    d3v = grid.vertical_diff(v)
    div_bar = bars[0][0] + bars[1][1]
    G2 = m.A * m.K * d3v[0] + m.B * m.K * d3v[1] - m.dz_theta * div_bar

    G3 = neumann_G3(grid, s)
    gz = grid.grad_h(s.zeta)
    G4 = -(v[0, 0] * gz[0] + v[1, 0] * gz[1])
    return G1, G2, G3, G4


def neumann_G3(grid: Grid, s: State) -> np.ndarray:
    """Surface datum ``G3`` with ``d3 v = G3`` on top equivalent to ``n . grad_A v = 0``."""
    m = s.metric
    gz = grid.grad_h(s.zeta)
    vt = s.v[:, 0]
    vth = grid.fft(vt)
    gv = grid.ifft(np.stack([1j * grid.k1 * vth, 1j * grid.k2 * vth]))  # (dir, comp, nx, ny)
    d3v = np.tensordot(grid.D[0], s.v, axes=(0, 1))
    return gz[0] * gv[0] + gz[1] * gv[1] + m.K[0] * (m.dz_theta[0] - (gz[0] ** 2 + gz[1] ** 2)) * d3v


def linear_part(grid: Grid, s: State) -> np.ndarray:
    """``-g grad zeta + Lap v - f k x v``."""
    spec = grid.spec
    return -spec.g * grid.grad_h(s.zeta)[:, None] + laplacian(grid, s.v) - coriolis(spec.f, s.v)


def top_normal_flux(grid: Grid, v: np.ndarray, zeta: np.ndarray, m: MetricCache) -> np.ndarray:
    """``n . grad_A v`` on the surface, shape ``(2, nx, ny)``."""
    gz = grid.grad_h(zeta)
    bars = bar_derivatives(grid, v, m)
    return -gz[0] * bars[0][:, 0] - gz[1] * bars[1][:, 0] + bars[2][:, 0]


def boundary_residuals(grid: Grid, s: State) -> tuple[np.ndarray, np.ndarray]:
    """``(n . grad_A v on top, v at the bottom)``."""
    return top_normal_flux(grid, s.v, s.zeta, s.metric), s.v[:, -1].copy()


def divergence_residual(grid: Grid, s: State) -> float:
    """``max |div_A v + K d3 w|`` relative to ``max |grad v|``."""
    m = s.metric
    res = div_Astar(grid, s.v, m) + m.K * grid.vertical_diff(s.w)
    bars = bar_derivatives(grid, s.v, m)
    scale = np.abs(bars).max()
    return float(np.abs(res).max() / scale) if scale > 0 else float(np.abs(res).max())


# ------------------------------------------------------------- compatibility
@dataclass
class CompatibilityReport:
    order: int
    tol: float
    residuals: dict[str, float] = field(default_factory=dict)
    informational: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())


def _order1_residuals(grid, s):
    top, bottom = _order1_residuals_fields(grid, s)
    return float(np.abs(top).max()), float(np.abs(bottom).max())


def compatibility_check(grid: Grid, v0: np.ndarray, zeta0: np.ndarray, order: int = 0, tol: float = 1e-6) -> CompatibilityReport:
    """Check the initial-data compatibility conditions up to ``order``.

    Order 0: ``v0 = 0`` on the bottom and ``n . grad_A v0 = 0`` on top.
    Order 1 adds the same two conditions on the time derivative, computed
    from the equations.  The second-order conditions are reported under
    ``informational`` (estimated by differencing along the Taylor path) and
    never affect ``passed``.
    """
    if order not in (0, 1):
        raise ValueError("compatibility order must be 0 or 1")
    s = make_state(grid, v0, zeta0)
    rep = CompatibilityReport(order=order, tol=tol)
    top, bottom = boundary_residuals(grid, s)
    rep.residuals["top_0"] = float(np.abs(top).max())
    rep.residuals["bottom_0"] = float(np.abs(bottom).max())
    if order >= 1:
        rep.residuals["top_1"], rep.residuals["bottom_1"] = _order1_residuals(grid, s)
        h = 1e-4
        try:
            plus = make_state(grid, s.v + h * s.dt_v, s.zeta + h * s.dt_zeta)
            minus = make_state(grid, s.v - h * s.dt_v, s.zeta - h * s.dt_zeta)
            tp, bp = _order1_residuals_fields(grid, plus)
            tm, bm = _order1_residuals_fields(grid, minus)
            rep.informational["top_2"] = float(np.abs((tp - tm) / (2 * h)).max())
            rep.informational["bottom_2"] = float(np.abs((bp - bm) / (2 * h)).max())
        except Exception:  # informational only
            rep.informational["top_2"] = float("nan")
            rep.informational["bottom_2"] = float("nan")
    return rep


def _order1_residuals_fields(grid, s):
    # field-valued variant used for the informational second-order estimate
    m = s.metric
    gz = grid.grad_h(s.zeta)
    gzt = grid.grad_h(s.dt_zeta)
    vt, vtt = s.v[:, 0], s.dt_v[:, 0]
    d3v = grid.vertical_diff(s.v)[:, 0]
    d3vt = grid.vertical_diff(s.dt_v)[:, 0]
    gv = np.stack([grid.dx(vt), grid.dy(vt)])
    gvt = np.stack([grid.dx(vtt), grid.dy(vtt)])
    K = m.K[0]
    K_t = -K * K * m.dt_J[0]
    q = 1.0 + gz[0] ** 2 + gz[1] ** 2
    q_t = 2.0 * (gz[0] * gzt[0] + gz[1] * gzt[1])
    top = (
        -(gzt[0] * gv[0] + gzt[1] * gv[1])
        - (gz[0] * gvt[0] + gz[1] * gvt[1])
        + (K_t * q + K * q_t) * d3v
        + K * q * d3vt
    )
    return top, s.dt_v[:, -1]
