"""Energy, dissipation and regularity functionals plus run monitors.

With ``||.||_s`` the volume norm and ``|.|_r`` the surface norm,

    E = sum_{i=0}^{2} ||dt^i v||_{4-2i} + |dt^i zeta|_{4-2i}
    D = ||v||_5 + ||dt v||_3 + ||dt^2 v||_1 + |grad zeta|_3
        + |dt zeta|_{7/2} + |dt^2 zeta|_{3/2} + |dt^3 zeta|_{-1/2}
    F = |grad zeta|_{7/2}
    G(T) = sup_{t<=T} (E^2 + F^2) + int_0^T D^2.

First time derivatives come from the equations (stored on each state);
second and third ones are estimated by differencing a short history.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from freeprim.grid import Grid, PreconditionError
from freeprim.model import State, boundary_residuals, divergence_residual

NAN = float("nan")


# ---------------------------------------------------------- time derivatives
@dataclass(frozen=True)
class TimeDerivativeEstimates:
    dt2_v: np.ndarray
    dt2_zeta: np.ndarray
    dt3_zeta: np.ndarray
    valid: bool
    spread: float  # relative disagreement of the two stencil widths


_STENCILS = {
    # first-derivative weights (times 1/dt) for nodes 0, 1, 2 evaluated at node `at`
    0: (-1.5, 2.0, -0.5),
    1: (-0.5, 0.0, 0.5),
    2: (0.5, -2.0, 1.5),
}


def estimate_time_derivatives(history: Sequence, dt: float, at: int = 1, tol: float = 0.1) -> TimeDerivativeEstimates:
    """Second and third time derivatives from three uniformly spaced levels.

    ``history`` holds three objects with ``dt_v`` and ``dt_zeta`` (oldest
    first).  ``dt^2`` fields are three-point derivatives of the stored first
    derivatives at node ``at`` (centered for ``at = 1``); ``dt^3 zeta`` is
    their second difference.  ``valid`` compares the three-point ``dt^2 zeta``
    with the two-point difference over the nearest interval.
    """
    if len(history) < 3:
        raise PreconditionError(f"need 3 history levels, got {len(history)}")
    h = list(history)[-3:]
    ts = [getattr(x, "t", None) for x in h]
    if all(t is not None for t in ts):
        if not (math.isclose(ts[1] - ts[0], dt, rel_tol=1e-6) and math.isclose(ts[2] - ts[1], dt, rel_tol=1e-6)):
            raise PreconditionError(f"history is not uniformly spaced by dt = {dt}: times {ts}")
    w = _STENCILS[at]
    dv = [x.dt_v for x in h]
    dz = [x.dt_zeta for x in h]
    dt2_v = (w[0] * dv[0] + w[1] * dv[1] + w[2] * dv[2]) / dt
    dt2_zeta = (w[0] * dz[0] + w[1] * dz[1] + w[2] * dz[2]) / dt
    dt3_zeta = (dz[0] - 2.0 * dz[1] + dz[2]) / dt**2
    narrow = (dz[1] - dz[0]) / dt if at <= 1 else (dz[2] - dz[1]) / dt
    scale = max(float(np.abs(dt2_zeta).max()), 1e-300)
    spread = float(np.abs(narrow - dt2_zeta).max()) / scale
    valid = spread <= tol or float(np.abs(dt2_zeta).max()) == 0.0
    return TimeDerivativeEstimates(dt2_v, dt2_zeta, dt3_zeta, bool(valid), spread)


# ------------------------------------------------------------- functionals
def _grad_norm(grid: Grid, zeta: np.ndarray, r: float) -> float:
    return grid.surface_norm(grid.grad_h(zeta), r)


def functional_E(grid: Grid, s: State, h: TimeDerivativeEstimates | None = None, strict: bool = False) -> float:
    """Energy in sum-of-norms form; without ``h`` the ``i = 2`` terms are dropped."""
    if h is not None and strict and not h.valid:
        raise PreconditionError("time-derivative estimates flagged invalid")
    if h is None and strict:
        raise PreconditionError("full E requested without second time derivatives")
    E = grid.volume_norm(s.v, 4) + grid.surface_norm(s.zeta, 4)
    E += grid.volume_norm(s.dt_v, 2) + grid.surface_norm(s.dt_zeta, 2)
    if h is not None:
        E += grid.volume_norm(h.dt2_v, 0) + grid.surface_norm(h.dt2_zeta, 0)
    return float(E)


def functional_D(grid: Grid, s: State, h: TimeDerivativeEstimates | None = None, strict: bool = False) -> float:
    """Dissipation in sum-of-norms form; without ``h`` the ``dt^2``, ``dt^3`` terms are dropped."""
    if h is not None and strict and not h.valid:
        raise PreconditionError("time-derivative estimates flagged invalid")
    if h is None and strict:
        raise PreconditionError("full D requested without second time derivatives")
    D = grid.volume_norm(s.v, 5) + grid.volume_norm(s.dt_v, 3)
    D += _grad_norm(grid, s.zeta, 3) + grid.surface_norm(s.dt_zeta, 3.5)
    if h is not None:
        D += grid.volume_norm(h.dt2_v, 1) + grid.surface_norm(h.dt2_zeta, 1.5)
        d3 = h.dt3_zeta - h.dt3_zeta.mean()  # mean is round-off only (mass is conserved)
        D += grid.surface_norm(d3, -0.5)
    return float(D)


def functional_F(grid: Grid, s: State) -> float:
    """``|grad zeta|_{7/2}``."""
    return _grad_norm(grid, s.zeta, 3.5)


def functional_G(records: Sequence, T: float | None = None) -> float:
    """``sup (E^2 + F^2) + int D^2`` over records with ``t <= T`` (trapezoid in time)."""
    recs = [r for r in records if T is None or r.t <= T + 1e-12]
    if not recs:
        return 0.0
    t = np.array([r.t for r in recs])
    E = np.array([r.E for r in recs])
    F = np.array([r.F for r in recs])
    D = np.array([r.D for r in recs])
    sup = float(np.max(E**2 + F**2))
    integral = float(np.trapezoid(D**2, t)) if len(recs) > 1 else 0.0
    return sup + integral


# ---------------------------------------------------------- negative norms
def negative_norm(grid: Grid, f: np.ndarray, gamma: float, mean_tol: float = 1e-8) -> float:
    """``| |grad|^{-gamma} f |_0`` with the zero mode annihilated."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    fh = grid.fft(np.asarray(f, dtype=float))
    scale = max(float(np.abs(fh).max()), 1.0)
    if np.abs(fh[..., 0, 0]).max() > mean_tol * scale:
        raise PreconditionError("negative norm of a field with nonzero mean")
    with np.errstate(divide="ignore"):
        weight = np.where(grid.ksq > 0, grid.ksq ** (-gamma), 0.0)
    total = np.sum(grid.half_weights * weight * np.abs(fh) ** 2)
    return float(np.sqrt(grid.area * total))


def negative_norm_volume(grid: Grid, v: np.ndarray, gamma: float, mean_tol: float = 1e-8) -> float:
    """Per-level ``|grad|^{-gamma}`` followed by the ``L^2`` norm over the slab."""
    v = np.asarray(v, dtype=float)
    comps = v.reshape((-1,) + grid.volume_shape)
    total = 0.0
    for c in comps:
        levels = np.array([negative_norm(grid, lev, gamma, mean_tol) ** 2 for lev in c])
        total += float(grid.wz @ levels)
    return float(np.sqrt(total))


# ------------------------------------------------------------------ records
@dataclass
class DiagnosticsRecord:
    t: float
    E: float
    D: float
    F: float
    mass: float
    min_J: float
    div_residual: float
    top_bc_residual: float
    bottom_bc_residual: float
    wave_residual_rel: float = NAN
    neg_norm_zeta: float = NAN
    complete: bool = True  # False when dt^2 / dt^3 terms were unavailable or flagged

    def as_dict(self) -> dict:
        return asdict(self)


SERIES_COLUMNS = (
    "t", "E", "D", "F", "mass", "min_J", "div_res", "top_bc_res", "bottom_bc_res", "wave_res_rel", "neg_norm_zeta",
)


def record_row(r: DiagnosticsRecord) -> tuple:
    return (
        r.t, r.E, r.D, r.F, r.mass, r.min_J, r.div_residual, r.top_bc_residual,
        r.bottom_bc_residual, r.wave_residual_rel, r.neg_norm_zeta,
    )


def make_record(
    grid: Grid,
    s: State,
    h: TimeDerivativeEstimates | None,
    wave_rel: float = NAN,
    gamma: float | None = None,
) -> DiagnosticsRecord:
    top, bottom = boundary_residuals(grid, s)
    neg = NAN
    if gamma is not None:
        z = s.zeta - s.zeta.mean()
        neg = negative_norm(grid, z, gamma)
    return DiagnosticsRecord(
        t=float(s.t),
        E=functional_E(grid, s, h),
        D=functional_D(grid, s, h),
        F=functional_F(grid, s),
        mass=float(grid.area * s.zeta.mean()),
        min_J=s.metric.min_J,
        div_residual=divergence_residual(grid, s),
        top_bc_residual=float(np.abs(top).max()),
        bottom_bc_residual=float(np.abs(bottom).max()),
        wave_residual_rel=wave_rel,
        neg_norm_zeta=neg,
        complete=h is not None and h.valid,
    )


class Recorder:
    """Stepper sink that turns the rolling history into records.

    A record for step ``n`` (a multiple of ``every``) is produced once step
    ``n + 1`` exists, so that time derivatives and the wave residual use a
    centered window.  Step 0 uses one-sided stencils; :meth:`finish` emits
    the last step with backward stencils if it is due and was not covered.
    """

    def __init__(self, grid: Grid, dt: float, every: int = 1, gamma: float | None = None, wave: bool = True):
        self.grid = grid
        self.dt = dt
        self.every = every
        self.gamma = gamma
        self.wave = wave
        self.records: list[DiagnosticsRecord] = []
        self._calls = 0
        self._last: list = []

    def __call__(self, history: list) -> None:
        n = self._calls  # index of the newest state
        self._calls += 1
        self._last = history
        if len(history) < 3:
            return
        if n == 2:
            self.records.append(self._record(history, at=0))
        mid = n - 1
        if mid % self.every == 0 and mid > 0:
            self.records.append(self._record(history, at=1))

    def _record(self, history, at: int) -> DiagnosticsRecord:
        s = history[at]
        h = estimate_time_derivatives(history, self.dt, at=at)
        rel = NAN
        if self.wave and at == 1:
            from freeprim.surfacewave import compute_phi, wave_residual

            phi = compute_phi(self.grid, s).phi
            rel = wave_residual(self.grid, tuple(x.zeta for x in history), phi, self.dt).relative
        return make_record(self.grid, s, h, rel, self.gamma)

    def finish(self) -> list[DiagnosticsRecord]:
        """Emit records that never got a look-ahead step."""
        hist = self._last
        n = self._calls - 1
        if n < 0:
            return self.records
        if n < 2:
            # too short for any second-derivative estimate
            if n == 0 or not self.records:
                self.records.append(make_record(self.grid, hist[0], None, NAN, self.gamma))
            if n >= 1 and n % self.every == 0:
                self.records.append(make_record(self.grid, hist[-1], None, NAN, self.gamma))
        elif n % self.every == 0:
            self.records.append(self._record(hist, at=2))
        return self.records


def energy_truncated(grid: Grid, s: State) -> float:
    """``E`` without the second-derivative terms (cheap regime check for the stepper)."""
    return functional_E(grid, s, None)


# ------------------------------------------------------------------ monitors
@dataclass
class MonitorReport:
    theta_hat: float  # +inf when no interval constrains it
    violations: list[int] = field(default_factory=list)
    rates: np.ndarray | None = None
    slack: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def energy_inequality_monitor(records: Sequence, slack_factor: float = 1e-8) -> MonitorReport:
    """Largest ``theta`` with ``d(E^2)/dt + theta D^2 <= slack`` on every interval.

    ``D^2`` on an interval is the mean of its endpoint values; ``slack`` is
    ``slack_factor * max E^2``.  Intervals where ``E^2`` grows by more than
    ``slack`` are reported as violations.
    """
    if len(records) < 2:
        raise PreconditionError("energy monitor needs at least two records")
    t = np.array([r.t for r in records], dtype=float)
    E2 = np.array([r.E for r in records], dtype=float) ** 2
    D2 = np.array([r.D for r in records], dtype=float) ** 2
    slack = slack_factor * float(np.max(E2))
    dt = np.diff(t)
    rate = np.diff(E2) / dt
    Dm = 0.5 * (D2[1:] + D2[:-1])
    violations = [int(i) for i in np.nonzero(np.diff(E2) > slack)[0]]
    with np.errstate(divide="ignore", invalid="ignore"):
        bounds = np.where(Dm > 0, (slack - rate) / Dm, np.inf)
    theta = float(np.min(bounds)) if bounds.size else math.inf
    theta = max(theta, 0.0)
    return MonitorReport(theta_hat=theta, violations=violations, rates=rate, slack=slack)


@dataclass(frozen=True)
class FitResult:
    rate: float  # decay rate (exponential) or exponent (algebraic), positive for decay
    r2: float
    intercept: float
    n_points: int


def decay_fit(t, y, model: str = "exponential", exclude: float = 0.1) -> FitResult:
    """Least-squares decay fit on ``log y``.

    ``exponential``: ``log y = c - rate t``; ``algebraic``: ``log y = c - rate log(1 + t)``.
    The first ``exclude`` fraction of the time span is left out.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.size < 2:
        raise ValueError("need matching t, y with at least two samples")
    t0 = t[0] + exclude * (t[-1] - t[0])
    sel = t >= t0 - 1e-12
    ts, ys = t[sel], y[sel]
    if np.any(~(ys > 0)):
        raise PreconditionError("decay_fit needs positive y on the fit window")
    if model == "exponential":
        x = ts
    elif model == "algebraic":
        x = np.log1p(ts)
    else:
        raise ValueError(f"unknown model {model!r}")
    ly = np.log(ys)
    slope, intercept = np.polyfit(x, ly, 1)
    pred = intercept + slope * x
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(rate=float(-slope), r2=r2, intercept=float(intercept), n_points=int(ts.size))
