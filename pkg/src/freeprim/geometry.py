"""Flattening of the free-surface domain onto the fixed slab.

The moving domain ``-b < x3 < zeta`` is mapped onto ``-b < x3 < 0`` by
``x3 -> x3 + theta`` with ``theta = chi(x3) * ext(zeta)``, where ``ext`` is the
harmonic extension and ``chi`` a smooth cutoff that is 1 near the surface and
0 near the bottom.  The transformed derivatives are

    d1_bar = d1 - A K d3,   d2_bar = d2 - B K d3,   d3_bar = K d3

with ``A = d1 theta``, ``B = d2 theta``, ``J = 1 + d3 theta`` and ``K = 1/J``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from freeprim.grid import Grid, PreconditionError


class DegenerateMetricError(RuntimeError):
    """The Jacobian of the flattening map fell below the allowed floor."""

    def __init__(self, min_J: float, location: tuple[int, int, int]):
        self.min_J = min_J
        self.location = location
        super().__init__(f"Jacobian min J = {min_J:.4g} at (level, i, j) = {location}")


# ------------------------------------------------------------------- cutoff
def _h(u):
    u = np.asarray(u, dtype=float)
    pos = u > 0
    safe = np.where(pos, u, 1.0)
    return np.where(pos, np.exp(-1.0 / safe), 0.0), pos, safe


def _h_derivs(u):
    h, pos, s = _h(u)
    h1 = np.where(pos, h / s**2, 0.0)
    h2 = np.where(pos, h * (1.0 / s**4 - 2.0 / s**3), 0.0)
    return h, h1, h2


def _check_depth(x3, b):
    x3 = np.asarray(x3, dtype=float)
    tol = 1e-12 * b
    if np.any(x3 < -b - tol) or np.any(x3 > tol):
        raise PreconditionError(f"cutoff evaluated outside [-b, 0] with b={b}")
    return x3


def _smoothstep(x3, b):
    x3 = _check_depth(x3, b)
    u = (x3 + 0.75 * b) / (0.5 * b)
    p, p1, p2 = _h_derivs(u)
    q, q1, q2 = _h_derivs(1.0 - u)
    # q(u) := h(1-u): dq/du = -h'(1-u), d2q/du2 = h''(1-u)
    q1 = -q1
    den = p + q
    s = p / den
    num1 = p1 * q - p * q1
    s1 = num1 / den**2
    num1p = p2 * q - p * q2
    den1 = p1 + q1
    s2 = (num1p * den - 2.0 * num1 * den1) / den**3
    du = 2.0 / b
    return s, s1 * du, s2 * du * du


def cutoff(x3, b: float):
    """Smooth cutoff: 0 on ``[-b, -3b/4]``, 1 on ``[-b/4, 0]``."""
    return _smoothstep(x3, b)[0]


def cutoff_d1(x3, b: float):
    return _smoothstep(x3, b)[1]


def cutoff_d2(x3, b: float):
    return _smoothstep(x3, b)[2]


# ------------------------------------------------------- harmonic extension
def _extension_factors(grid: Grid):
    # exp(|k| x3) per level and mode; cached on the grid instance
    cache = grid.__dict__.get("_ext_factors")
    if cache is None:
        E = np.exp(grid.kabs[None] * grid.z[:, None, None])
        chi, chi1, chi2 = _smoothstep(grid.z, grid.b)
        cache = (E, chi[:, None, None], chi1[:, None, None], chi2[:, None, None])
        grid.__dict__["_ext_factors"] = cache
    return cache


def harmonic_extension(grid: Grid, zeta: np.ndarray) -> np.ndarray:
    """Per-mode ``zeta_n exp(|k| x3)`` sampled at the collocation levels.

    With ``|k| = 2 pi |n| / L`` each mode is harmonic in the slab.
    """
    E = _extension_factors(grid)[0]
    return grid.ifft(E * grid.fft(zeta)[None])


# ------------------------------------------------------------------- metric
@dataclass(frozen=True)
class MetricCache:
    """Flattening coefficients for one time level.

    ``dt_*`` entries are time derivatives built from the surface rate
    ``dt_zeta``; they are zero when no rate was supplied.
    """

    theta: np.ndarray
    dt_theta: np.ndarray
    A: np.ndarray
    B: np.ndarray
    J: np.ndarray
    K: np.ndarray
    dz_theta: np.ndarray
    dzz_theta: np.ndarray
    dz_A: np.ndarray
    dz_B: np.ndarray
    dt_A: np.ndarray
    dt_B: np.ndarray
    dt_J: np.ndarray

    @property
    def min_J(self) -> float:
        return float(self.J.min())


def _active(grid: Grid) -> int:
    # number of levels (from the top) on which the cutoff is not identically 0
    _, chi, _, _ = _extension_factors(grid)
    return int(np.count_nonzero(chi.ravel()))


def _multiplier_stack(grid: Grid, key: str, mults) -> np.ndarray:
    # spectral multipliers broadcast to the half spectrum; cached per grid
    cache = grid.__dict__.setdefault("_mult_stacks", {})
    if key not in cache:
        cache[key] = np.stack([np.broadcast_to(np.asarray(m, dtype=complex), grid.ksq.shape) for m in mults])
    return cache[key]


def _theta_parts(grid: Grid, zh: np.ndarray):
    """theta, A, B, d3 theta, d3^2 theta, d3 A, d3 B from coefficients ``zh``.

    Only the levels inside the cutoff support are transformed; the rest are 0.
    """
    E, chi, chi1, chi2 = _extension_factors(grid)
    na = _active(grid)
    E, chi, chi1, chi2 = E[:na], chi[:na], chi1[:na], chi2[:na]
    ext_h = E * zh[None]
    k = grid.kabs
    ik1, ik2 = 1j * grid.k1, 1j * grid.k2
    mults = _multiplier_stack(grid, "theta", (1.0, k, k * k, ik1, ik2, ik1 * k, ik2 * k))
    ext, ext_z, ext_zz, e1, e2, e1z, e2z = grid.ifft(mults[:, None] * ext_h[None])
    out = np.zeros((7,) + grid.volume_shape)
    out[0, :na] = chi * ext
    out[1, :na] = chi * e1
    out[2, :na] = chi * e2
    out[3, :na] = chi1 * ext + chi * ext_z
    out[4, :na] = chi2 * ext + 2.0 * chi1 * ext_z + chi * ext_zz
    out[5, :na] = chi1 * e1 + chi * e1z
    out[6, :na] = chi1 * e2 + chi * e2z
    return tuple(out)


def _rate_parts(grid: Grid, zh: np.ndarray):
    """theta, A, B, d3 theta of the extension of ``zh`` (used for rates)."""
    E, chi, chi1, _ = _extension_factors(grid)
    na = _active(grid)
    E, chi, chi1 = E[:na], chi[:na], chi1[:na]
    ext_h = E * zh[None]
    mults = _multiplier_stack(grid, "rate", (1.0, grid.kabs, 1j * grid.k1, 1j * grid.k2))
    ext, ext_z, e1, e2 = grid.ifft(mults[:, None] * ext_h[None])
    out = np.zeros((4,) + grid.volume_shape)
    out[0, :na] = chi * ext
    out[1, :na] = chi * e1
    out[2, :na] = chi * e2
    out[3, :na] = chi1 * ext + chi * ext_z
    return tuple(out)


def build_metric(
    grid: Grid,
    zeta: np.ndarray,
    dt_zeta: np.ndarray | None = None,
    j_floor: float = 0.1,
) -> MetricCache:
    """Metric coefficients of the flattening map for surface ``zeta``.

    The vertical derivatives of ``theta`` use the analytic per-mode factor
    ``|k| exp(|k| x3)`` and the analytic cutoff derivatives, so no collocation
    differencing of the extension is involved.
    """
    theta, A, B, dz, dzz, dz_A, dz_B = _theta_parts(grid, grid.fft(zeta))
    J = 1.0 + dz
    if J.min() <= j_floor:
        loc = np.unravel_index(np.argmin(J), J.shape)
        raise DegenerateMetricError(float(J.min()), tuple(int(i) for i in loc))
    K = 1.0 / J
    if dt_zeta is None:
        zero = np.zeros_like(theta)
        dt_theta = dt_A = dt_B = dt_J = zero
    else:
        dt_theta, dt_A, dt_B, dt_J = _rate_parts(grid, grid.fft(dt_zeta))
    return MetricCache(
        theta=theta,
        dt_theta=dt_theta,
        A=A,
        B=B,
        J=J,
        K=K,
        dz_theta=dz,
        dzz_theta=dzz,
        dz_A=dz_A,
        dz_B=dz_B,
        dt_A=dt_A,
        dt_B=dt_B,
        dt_J=dt_J,
    )


def with_rate(grid: Grid, m: MetricCache, dt_zeta: np.ndarray) -> MetricCache:
    """Copy of ``m`` with the time-derivative slots built from ``dt_zeta``."""
    dt_theta, dt_A, dt_B, dt_J = _rate_parts(grid, grid.fft(dt_zeta))
    return MetricCache(
        theta=m.theta,
        dt_theta=dt_theta,
        A=m.A,
        B=m.B,
        J=m.J,
        K=m.K,
        dz_theta=m.dz_theta,
        dzz_theta=m.dzz_theta,
        dz_A=m.dz_A,
        dz_B=m.dz_B,
        dt_A=dt_A,
        dt_B=dt_B,
        dt_J=dt_J,
    )


def flat_metric(grid: Grid) -> MetricCache:
    zero = np.zeros(grid.volume_shape)
    one = np.ones(grid.volume_shape)
    return MetricCache(
        theta=zero, dt_theta=zero, A=zero, B=zero, J=one, K=one, dz_theta=zero,
        dzz_theta=zero, dz_A=zero, dz_B=zero, dt_A=zero, dt_B=zero, dt_J=zero,
    )


# ------------------------------------------------------ transformed calculus
def bar_derivatives(grid: Grid, phi: np.ndarray, m: MetricCache) -> np.ndarray:
    """``(d1_bar, d2_bar, d3_bar) phi`` for a scalar or a stack of scalars."""
    ph = grid.fft(phi)
    d1, d2 = grid.ifft(np.stack([1j * grid.k1 * ph, 1j * grid.k2 * ph]))
    d3 = grid.vertical_diff(phi)
    Kd3 = m.K * d3
    return np.stack([d1 - m.A * Kd3, d2 - m.B * Kd3, Kd3])


def grad_A(grid: Grid, phi: np.ndarray, m: MetricCache) -> np.ndarray:
    """Transformed gradient of a volume scalar, shape ``(3, nz, nx, ny)``."""
    return bar_derivatives(grid, phi, m)


def div_Astar(grid: Grid, u: np.ndarray, m: MetricCache) -> np.ndarray:
    """``d1_bar u1 + d2_bar u2`` for a horizontal vector volume field."""
    Kd3 = m.K * grid.vertical_diff(u)
    uh = grid.fft(u)
    return grid.ifft(1j * grid.k1 * uh[0] + 1j * grid.k2 * uh[1]) - m.A * Kd3[0] - m.B * Kd3[1]


def derivative_bundle(grid: Grid, phi: np.ndarray, m: MetricCache, phi_hat: np.ndarray | None = None):
    """Transformed first derivatives and ``Delta_A phi`` sharing one set of transforms.

    Returns ``(bars, lap)`` with ``bars`` as from :func:`bar_derivatives`.
    The outer ``d3`` acting on ``A K d3 phi`` etc. uses the product rule with
    the analytic vertical derivatives of the metric factors, so only ``phi``
    is collocation-differenced.  ``phi_hat`` may pass ``grid.fft(phi)``.
    """
    A, B, K = m.A, m.B, m.K
    dz_K = -K * K * m.dzz_theta
    AK, BK = A * K, B * K
    dz_AK = m.dz_A * K + A * dz_K
    dz_BK = m.dz_B * K + B * dz_K
    ik1, ik2 = 1j * grid.k1, 1j * grid.k2

    p3 = grid.vertical_diff(phi)
    p33 = grid.vertical_diff(p3)
    ph = grid.fft(phi) if phi_hat is None else phi_hat
    buf = np.empty((2,) + ph.shape, dtype=complex)
    np.multiply(ik1, ph, out=buf[0])
    np.multiply(ik2, ph, out=buf[1])
    p1, p2 = grid.ifft(buf)
    # level-wise collocation commutes exactly with the horizontal transform
    p13 = grid.vertical_diff(p1)
    p23 = grid.vertical_diff(p2)

    AKp3 = AK * p3
    BKp3 = BK * p3
    g1 = p1 - AKp3
    g2 = p2 - BKp3
    g3 = K * p3
    # flat part with the full |k|^2 so that zeta = 0 reproduces Lap exactly
    gh = grid.fft(np.stack([AKp3, BKp3]))
    out = grid.ifft(-grid.ksq * ph - ik1 * gh[0] - ik2 * gh[1])
    out -= AK * (p13 - dz_AK * p3 - AK * p33)
    out -= BK * (p23 - dz_BK * p3 - BK * p33)
    out += K * (dz_K * p3 + K * p33)
    return np.stack([g1, g2, g3]), out


def laplacian_A(grid: Grid, phi: np.ndarray, m: MetricCache) -> np.ndarray:
    """``sum_i d_i_bar (d_i_bar phi)``, applying each transformed derivative twice.

    Accepts ``(nz, nx, ny)`` or ``(c, nz, nx, ny)``.
    """
    return derivative_bundle(grid, phi, m)[1]


def vertical_diff_metric(grid: Grid, coeff: np.ndarray, dz_coeff: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``d3(coeff * u)`` with ``coeff`` differentiated analytically."""
    return dz_coeff * u + coeff * grid.vertical_diff(u)


def laplacian(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Flat Laplacian ``d1^2 + d2^2 + d3^2``."""
    return grid.lap_h(phi) + grid.vertical_diff(grid.vertical_diff(phi))


def laplacian_A_correction(grid: Grid, phi: np.ndarray, m: MetricCache) -> np.ndarray:
    """Term-by-term expansion of ``Delta_A phi - Delta phi``.

    Independent of :func:`laplacian_A`; metric derivatives are taken
    analytically (``d3 A = d1 d3 theta`` etc.) and only ``phi`` is differenced.
    """
    A, B, K = m.A, m.B, m.K
    AK, BK = A * K, B * K
    dz = m.dz_theta
    dzz = m.dzz_theta
    p3 = grid.vertical_diff(phi)
    p33 = grid.vertical_diff(p3)
    p13 = grid.dx(p3)
    p23 = grid.dy(p3)
    dK_dz = -K * K * dzz
    dK_d1 = -K * K * grid.dx(dz)
    dK_d2 = -K * K * grid.dy(dz)
    d1_AK = grid.dx(A) * K + A * dK_d1
    d2_BK = grid.dy(B) * K + B * dK_d2
    d3_AK = grid.dx(dz) * K + A * dK_dz
    d3_BK = grid.dy(dz) * K + B * dK_dz
    # d3 A is recomputed as d1 of the analytic d3 theta, not read from the cache
    return (
        -d1_AK * p3
        - 2 * AK * p13
        + AK * d3_AK * p3
        + A**2 * K**2 * p33
        - d2_BK * p3
        - 2 * BK * p23
        + BK * d3_BK * p3
        + B**2 * K**2 * p33
        - K**3 * dzz * p3
        - K**2 * (2 * dz + dz**2) * p33
    )
