"""Damped surface-wave form of the kinematic condition.

Differentiating ``dt zeta = w|_top - v|_top . grad zeta`` in time and
substituting the momentum equation gives

    dt^2 zeta - g b Lap zeta - Lap dt zeta = Phi,

where ``Phi`` collects the nonlinear forcing, the Coriolis integral and the
vertical-flux bracket at the top and bottom of the slab.  This module
evaluates ``Phi`` from a single state (all time derivatives inside it come
from the equations), checks the identity against trajectories, and provides
the exact per-mode solution of the homogeneous equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from freeprim.geometry import derivative_bundle, div_Astar, laplacian
from freeprim.grid import Grid, PreconditionError, eta_multiplier
from freeprim.model import State, advection_terms, divergence_flux

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class WaveForcing:
    phi1: np.ndarray
    phi2: np.ndarray
    phi: np.ndarray
    varphi: np.ndarray
    coriolis: np.ndarray  # the Coriolis integral entering phi2 (linear in v)
    bracket_bottom: np.ndarray  # d3(J div_A v) at the bottom (linear in v)


def _top_bottom(grid: Grid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return f[0], f[-1]


def compute_phi(grid: Grid, s: State) -> WaveForcing:
    """Forcing of the damped wave equation at one time level.

    ``phi1`` integrates the commutators between ``J div_A`` and the
    momentum operators; ``phi2`` adds the Coriolis integral, the flux bracket
    ``d3(J div_A v)`` between bottom and top, the metric Laplacian remainder
    and ``-g zeta Lap zeta``; ``phi = -phi2 - dt(v.grad zeta) + Lap(v.grad zeta)``.
    """
    spec = grid.spec
    m = s.metric
    v = s.v
    J, K = m.J, m.K

    bars, lap_v = derivative_bundle(grid, v, m, s.v_hat)
    transport, adv, vert = advection_terms(v, s.w, m, bars)
    N = transport - adv - vert
    div_v = bars[0][0] + bars[1][1]
    X = divergence_flux(grid, v, m)

    # d/dt of div_A at fixed v: -dt(A K) d3 v1 - dt(B K) d3 v2
    dt_K = -K * K * m.dt_J
    d3v = grid.vertical_diff(v)
    dtA_div = -(m.dt_A * K + m.A * dt_K) * d3v[0] - (m.dt_B * K + m.B * dt_K) * d3v[1]

    lapA_X = derivative_bundle(grid, X, m)[1]
    lap_X = laplacian(grid, X)
    integrand = (
        J * div_Astar(grid, N, m)
        + m.dt_J * div_v
        + J * dtA_div
        + J * div_Astar(grid, lap_v, m)
        - lapA_X
    )
    phi1 = grid.vertical_integral(integrand)

    curl = -bars[0][1] + bars[1][0]  # -d1_bar v2 + d2_bar v1
    cor = -grid.vertical_integral(spec.f * J * curl)
    dX = grid.vertical_diff(X)
    top, bottom = _top_bottom(grid, dX)
    lap_z = grid.lap_h(s.zeta)
    phi2 = cor + (top - bottom) + grid.vertical_integral(lapA_X - lap_X) - spec.g * s.zeta * lap_z + phi1

    gz = grid.grad_h(s.zeta)
    vt = v[:, 0]
    adv_top = vt[0] * gz[0] + vt[1] * gz[1]
    gzt = grid.grad_h(s.dt_zeta)
    dt_adv_top = s.dt_v[0, 0] * gz[0] + s.dt_v[1, 0] * gz[1] + vt[0] * gzt[0] + vt[1] * gzt[1]
    phi = -phi2 - dt_adv_top + grid.lap_h(adv_top)
    return WaveForcing(phi1=phi1, phi2=phi2, phi=phi, varphi=s.w[0].copy(), coriolis=cor, bracket_bottom=-bottom)


def linear_part_of_phi(forcing: WaveForcing) -> np.ndarray:
    """The part of ``phi`` that is linear in the state.

    ``phi2`` enters ``phi`` with a minus sign; its linear pieces are the
    Coriolis integral and the bottom flux bracket ``-d3(J div_A v)|_{-b}``.
    """
    return -(forcing.coriolis + forcing.bracket_bottom)


# ------------------------------------------------------------ wave residual
@dataclass(frozen=True)
class WaveResidual:
    residual: np.ndarray
    relative: float
    term_norms: dict


def wave_residual(
    grid: Grid,
    zetas: tuple[np.ndarray, np.ndarray, np.ndarray],
    phi: np.ndarray,
    dt: float | tuple[float, float],
) -> WaveResidual:
    """``dt^2 zeta - g b Lap zeta - Lap dt zeta - phi`` at the middle snapshot.

    Time derivatives are centered differences of the three snapshots.  The
    relative value divides the L2 norm of the residual by the largest L2 norm
    among the four terms (0 when all vanish).
    """
    if isinstance(dt, tuple):
        if not np.isclose(dt[0], dt[1], rtol=1e-9, atol=0.0):
            raise PreconditionError(f"non-uniform window: {dt[0]} vs {dt[1]}")
        dt = dt[0]
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    zm, z0, zp = zetas
    gb = grid.spec.g * grid.b
    d2 = (zp - 2.0 * z0 + zm) / dt**2
    d1 = (zp - zm) / (2.0 * dt)
    terms = {
        "dt2_zeta": d2,
        "gb_lap_zeta": gb * grid.lap_h(z0),
        "lap_dt_zeta": grid.lap_h(d1),
        "phi": phi,
    }
    res = terms["dt2_zeta"] - terms["gb_lap_zeta"] - terms["lap_dt_zeta"] - terms["phi"]
    norms = {k: _l2(grid, f) for k, f in terms.items()}
    scale = max(norms.values())
    rel = _l2(grid, res) / scale if scale > 0 else 0.0
    return WaveResidual(residual=res, relative=float(rel), term_norms=norms)


def _l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(grid.area * np.mean(f * f)))


# --------------------------------------------------------------- dispersion
def dispersion_roots(ksq: float, g: float, b: float) -> tuple[complex, complex]:
    """Roots of ``lam^2 + ksq lam + g b ksq = 0``; ``lam1`` has the larger real part."""
    if ksq < 0 or g <= 0 or b <= 0:
        raise ValueError("need ksq >= 0, g > 0, b > 0")
    if ksq == 0:
        return 0j, 0j
    gb = g * b
    disc = ksq * ksq - 4.0 * gb * ksq
    if abs(disc) <= DEGENERATE_TOL * ksq * ksq:
        lam = complex(-ksq / 2.0)
        return lam, lam
    if disc > 0:
        r = np.sqrt(disc)
        lam2 = -(ksq + r) / 2.0
        lam1 = gb * ksq / lam2  # product of roots; avoids cancellation
        return complex(lam1), complex(lam2)
    r = np.sqrt(-disc)
    return complex(-ksq / 2.0, r / 2.0), complex(-ksq / 2.0, -r / 2.0)


def exact_slow_rate(ksq: float, g: float, b: float, tol: float = 1e-14) -> float:
    """Slow decay rate of the linearized slab problem for one horizontal mode.

    The linear hydrostatic Stokes system with a free surface (stress-free
    top, no-slip bottom) has modes ``e^{lam t}`` with

        lam (lam + k^2) = -g k^2 (b - tanh(mu b) / mu),   mu = sqrt(lam + k^2),

    which reduces to the quadratic of :func:`dispersion_roots` only as
    ``tanh(mu b) / mu`` becomes negligible against ``b``.  Solved here by
    bisection on the real branch between ``lam1`` and 0 (real-root case).
    """
    k2 = ksq

    def F(lam):
        mu = np.sqrt(lam + k2)
        return lam * (lam + k2) + g * k2 * (b - np.tanh(mu * b) / mu)

    lo = -k2 + 1e-12
    hi = -1e-12
    # scan for the root closest to zero
    grid_pts = np.linspace(hi, lo, 4001)
    vals = np.array([F(x) for x in grid_pts])
    idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if idx.size == 0:
        raise ValueError("no real slow root (oscillatory regime)")
    i = idx[0]
    return -brentq(F, grid_pts[i + 1], grid_pts[i], xtol=tol)


def linear_wave_evolve(
    grid: Grid,
    zeta0: np.ndarray,
    dtzeta0: np.ndarray,
    T: float,
    g: float | None = None,
    b: float | None = None,
    return_rate: bool = False,
):
    """Exact solution of the homogeneous damped wave equation at time ``T``."""
    g = grid.spec.g if g is None else g
    b = grid.b if b is None else b
    z0 = grid.fft(zeta0)
    z1 = grid.fft(dtzeta0)
    out = np.zeros_like(z0)
    rate = np.zeros_like(z0)
    for idx in np.ndindex(z0.shape):
        ksq = float(grid.ksq[idx])
        l1, l2 = dispersion_roots(ksq, g, b)
        a, c = z0[idx], z1[idx]
        if l1 == l2:
            e = np.exp(l1 * T)
            out[idx] = (a + (c - l1 * a) * T) * e
            rate[idx] = (c + (c - l1 * a) * l1 * T) * e
        else:
            c1 = (c - l2 * a) / (l1 - l2)
            c2 = (l1 * a - c) / (l1 - l2)
            e1, e2 = np.exp(l1 * T), np.exp(l2 * T)
            out[idx] = c1 * e1 + c2 * e2
            rate[idx] = c1 * l1 * e1 + c2 * l2 * e2
    zt = grid.ifft(out)
    if return_rate:
        return zt, grid.ifft(rate)
    return zt


def eta_of_zeta(grid: Grid, zeta: np.ndarray) -> np.ndarray:
    """``(1 + |grad|)^{3/2} grad zeta`` as a Fourier multiplier."""
    return grid.apply_multiplier(zeta, eta_multiplier)


def commutator(grid: Grid, v: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``[(1 + |grad|)^{3/2} grad, v . grad] f`` for surface fields ``v`` (2-vector) and ``f``."""
    gf = grid.grad_h(f)
    lhs = eta_of_zeta(grid, v[0] * gf[0] + v[1] * gf[1])
    ef = eta_of_zeta(grid, f)
    rhs = np.stack([v[0] * grid.dx(ef[i]) + v[1] * grid.dy(ef[i]) for i in range(2)])
    return lhs - rhs
