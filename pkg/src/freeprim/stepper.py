"""Semi-implicit time integration.

Each step solves, independently for every horizontal Fourier mode, the
coupled linear system for ``(v_hat(., x3), zeta_hat)`` obtained from the
linear part

    dt v + g grad zeta - Lap v = G1,      dt zeta + int_{-b}^0 div v = (rest),

with bottom Dirichlet rows and a lagged top Neumann datum ``d3 v = G3``.
Everything else (advection, metric corrections, the nonlinear part of the
kinematic condition) is explicit.  Coriolis is a separate exact rotation
substep, so the implicit block has constant coefficients and its inverse is
computed once.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from freeprim.geometry import DegenerateMetricError, build_metric
from freeprim.grid import Grid
from freeprim.model import State, compatibility_check, make_state, neumann_G3

log = logging.getLogger(__name__)

SCHEMES = ("backward-euler", "bdf2")


class StepFailure(RuntimeError):
    """Unrecoverable failure inside a step (singular block, non-finite state)."""


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    scheme: str = "backward-euler"
    t_max: float = 1.0
    dealias: bool = True
    j_floor: float = 0.1
    output_every: int = 1
    growth_limit: float = 10.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        if 0 < self.t_max < self.dt:
            raise ValueError("t_max must be 0 or at least dt")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not 0 < self.j_floor < 1:
            raise ValueError("j_floor must lie in (0, 1)")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


def coriolis_rotation(v: np.ndarray, f: float, dt: float) -> np.ndarray:
    """Exact flow of ``dt v = -f k x v`` over ``dt`` (a rotation by ``-f dt``)."""
    if f == 0.0:
        return v
    c, s = math.cos(f * dt), math.sin(f * dt)
    return np.stack([c * v[0] + s * v[1], -s * v[0] + c * v[1]])


def top_bc_profile(grid: Grid) -> np.ndarray:
    """``r(x3) = x3 (x3 + b) / b``: zero at both ends, ``r'(0) = 1``."""
    z = grid.z
    return z * (z + grid.b) / grid.b


def top_bc_correction(grid: Grid, v: np.ndarray, zeta: np.ndarray, J_top: np.ndarray) -> np.ndarray:
    """Surface field ``c`` such that ``v + c(x') r(x3)`` satisfies ``n . grad_A v = 0`` on top.

    On the surface ``A = d1 zeta``, ``B = d2 zeta`` and the condition reads
    ``(1 + |grad zeta|^2) K d3 v = grad zeta . grad v``.  Since ``r(0) = 0``
    the correction leaves ``v`` (hence ``grad v``) on the surface untouched
    and shifts ``d3 v`` by ``c``.
    """
    gz = grid.grad_h(zeta)
    vt = v[:, 0]
    gv = gz[0] * grid.dx(vt) + gz[1] * grid.dy(vt)
    target = J_top * gv / (1.0 + gz[0] ** 2 + gz[1] ** 2)
    return target - np.tensordot(grid.D[0], v, axes=(0, 1))


def enforce_top_bc(grid: Grid, v: np.ndarray, zeta: np.ndarray, J_top: np.ndarray) -> np.ndarray:
    """``v`` corrected by :func:`top_bc_correction`."""
    c = top_bc_correction(grid, v, zeta, J_top)
    return v + c[:, None] * top_bc_profile(grid)[None, :, None, None]


class ModeSolver:
    """Batched per-mode inverses of the implicit block.

    Unknown ordering per mode: ``[V1(nz), V2(nz), Z]``.  ``coef`` is the
    weight of the new level in the time difference (1 for backward Euler,
    3/2 for BDF2).
    """

    def __init__(self, grid: Grid, dt: float, coef: float = 1.0, coriolis: float = 0.0):
        nz = grid.nz
        n = 2 * nz + 1
        g = grid.spec.g
        k1 = grid.k1.ravel()
        k2 = grid.k2.ravel()
        ksq = grid.ksq.ravel()
        nm = ksq.size
        a = coef / dt
        M = np.zeros((nm, n, n), dtype=complex)
        eye = np.eye(nz)
        inner = slice(1, nz - 1)
        for comp, kc in ((0, k1), (1, k2)):
            o = comp * nz
            blk = (a + ksq)[:, None, None] * eye - grid.D2
            M[:, o + 1 : o + nz - 1, o : o + nz] = blk[:, inner]
            M[:, o + 1 : o + nz - 1, 2 * nz] = (1j * g * kc)[:, None]
            M[:, o, o : o + nz] = grid.D[0]
            M[:, o + nz - 1, o + nz - 1] = 1.0
            M[:, 2 * nz, o : o + nz] = (1j * kc)[:, None] * grid.wz
        if coriolis:
            # implicit Coriolis (used by the second-order scheme): +f k x v
            idx = np.arange(1, nz - 1)
            M[:, idx, nz + idx] = -coriolis
            M[:, nz + idx, idx] = coriolis
        M[:, 2 * nz, 2 * nz] = a
        try:
            self.inv = np.linalg.inv(M)
        except np.linalg.LinAlgError as exc:
            bad = [i for i in range(nm) if np.linalg.cond(M[i]) > 1e14]
            raise StepFailure(f"singular implicit block at mode index {bad[:5]}") from exc
        self.matrix = M
        self.nz = nz
        self.shape = grid.ksq.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """``rhs`` has shape ``(2 nz + 1, n1, n2)`` (spectral)."""
        r = rhs.reshape(rhs.shape[0], -1).T[:, :, None]
        x = np.matmul(self.inv, r)[:, :, 0]
        return x.T.reshape(rhs.shape)


class Stepper:
    """Owns the precomputed implicit blocks for one ``(grid, config)``."""

    def __init__(self, grid: Grid, cfg: StepperConfig):
        self.grid = grid
        self.cfg = cfg
        self.be = ModeSolver(grid, cfg.dt)
        self.bdf = ModeSolver(grid, cfg.dt, coef=1.5, coriolis=grid.spec.f) if cfg.scheme == "bdf2" else None
        self._prev = None  # (state, explicit terms) for BDF2

    # -- explicit pieces ---------------------------------------------------------
    def explicit_terms(self, s: State):
        """Spectral ``(G1, G3, kinematic remainder)`` of ``s``.

        The kinematic remainder is ``dt zeta + int div v``, i.e. everything in
        the surface rate except the linearized ``w`` on top.
        """
        grid = self.grid
        spec = grid.spec
        vh = s.v_hat if s.v_hat is not None else grid.fft(s.v)
        zh = grid.fft(s.zeta)
        # linear part -g grad zeta + Lap v - f k x v, assembled spectrally
        lin = grid.vertical_diff(grid.vertical_diff(vh)) - grid.ksq * vh
        lin -= spec.g * np.stack([1j * grid.k1 * zh, 1j * grid.k2 * zh])[:, None]
        if spec.f:
            lin -= spec.f * np.stack([-vh[1], vh[0]])
        G1h = grid.fft(s.dt_v) - lin
        div_int = np.tensordot(grid.wz, 1j * grid.k1 * vh[0] + 1j * grid.k2 * vh[1], axes=(0, 0))
        Zr = grid.fft(s.dt_zeta) + div_int
        G3h = grid.fft(neumann_G3(grid, s))
        if self.cfg.dealias:
            mask = grid.dealias_mask
            G1h, G3h, Zr = G1h * mask, G3h * mask, Zr * mask
        return G1h, G3h, Zr

    def _assemble(self, vh_terms, zh_term, G1h, G3h, Zr):
        grid = self.grid
        nz = grid.nz
        rhs = np.zeros((2 * nz + 1,) + grid.ksq.shape, dtype=complex)
        for c in range(2):
            o = c * nz
            rhs[o + 1 : o + nz - 1] = vh_terms[c][1:-1] + G1h[c][1:-1]
            rhs[o] = G3h[c]
            rhs[o + nz - 1] = 0.0
        rhs[2 * nz] = zh_term + Zr
        return rhs

    def _finish(self, x, t) -> State:
        grid = self.grid
        nz = grid.nz
        vh = np.stack([x[:nz], x[nz : 2 * nz]])
        vh[:, -1] = 0.0
        zh = x[2 * nz].copy()
        zh[0, 0] = 0.0  # mass re-projection
        v = grid.ifft(vh)
        zeta = grid.ifft(zh)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(zeta))):
            raise StepFailure(f"non-finite state at t = {t:.6g}")
        m = build_metric(grid, zeta, j_floor=self.cfg.j_floor)
        c = top_bc_correction(grid, v, zeta, m.J[0])
        r = top_bc_profile(grid)[None, :, None, None]
        v += c[:, None] * r
        vh += grid.fft(c)[:, None] * r
        return make_state(grid, v, zeta, t=t, j_floor=self.cfg.j_floor, metric=m, v_hat=vh)

    def step(self, s: State) -> State:
        cfg, grid = self.cfg, self.grid
        dt = cfg.dt
        G1h, G3h, Zr = self.explicit_terms(s)
        if cfg.scheme == "bdf2" and self._prev is not None and self._prev[0].t == s.t - dt:
            # (3 u^{n+1} - 4 u^n + u^{n-1}) / (2 dt) = L u^{n+1} + 2 N^n - N^{n-1}
            prev, (pG1, pG3, pZr) = self._prev
            vh, vph = grid.fft(s.v), grid.fft(prev.v)
            zh, zph = grid.fft(s.zeta), grid.fft(prev.zeta)
            vterm = (2.0 * vh - 0.5 * vph) / dt
            zterm = (2.0 * zh - 0.5 * zph) / dt
            rhs = self._assemble(vterm, zterm, 2 * G1h - pG1, 2 * G3h - pG3, 2 * Zr - pZr)
            x = self.bdf.solve(rhs)
        else:
            vrot = coriolis_rotation(s.v, grid.spec.f, dt)
            if cfg.scheme == "bdf2":
                # the start-up step uses the same implicit Coriolis as BDF2
                vrot = s.v
            rhs = self._assemble(grid.fft(vrot) / dt, grid.fft(s.zeta) / dt, G1h, G3h, Zr)
            if cfg.scheme == "bdf2":
                x = self._be_with_coriolis().solve(rhs)
            else:
                x = self.be.solve(rhs)
        self._prev = (s, (G1h, G3h, Zr))
        return self._finish(x, s.t + dt)

    def _be_with_coriolis(self):
        if not hasattr(self, "_bec"):
            self._bec = ModeSolver(self.grid, self.cfg.dt, coriolis=self.grid.spec.f)
        return self._bec

    # -- linear analysis ---------------------------------------------------------
    def amplification_matrices(self) -> np.ndarray:
        """Frozen-linear one-step maps per mode (flat metric, no explicit terms).

        For backward Euler the map is ``M^{-1} P R`` where ``P`` copies the
        interior rows and the surface row scaled by ``1/dt`` and ``R`` is the
        Coriolis rotation.
        """
        grid = self.grid
        nz = grid.nz
        n = 2 * nz + 1
        dt = self.cfg.dt
        P = np.zeros((n, n))
        for c in range(2):
            o = c * nz
            idx = np.arange(o + 1, o + nz - 1)
            P[idx, idx] = 1.0 / dt
        P[2 * nz, 2 * nz] = 1.0 / dt
        f = grid.spec.f
        R = np.eye(n)
        if f:
            cs, sn = math.cos(f * dt), math.sin(f * dt)
            for i in range(nz):
                R[i, i], R[i, nz + i] = cs, sn
                R[nz + i, i], R[nz + i, nz + i] = -sn, cs
        return self.be.inv @ (P @ R)


def step(grid: Grid, s: State, cfg: StepperConfig) -> State:
    """One backward-Euler step (convenience wrapper; builds a fresh :class:`Stepper`)."""
    return Stepper(grid, cfg).step(s)


# ------------------------------------------------------------------ driver
@dataclass
class RunResult:
    status: str  # "ok", "degenerate-metric", "energy-growth", "step-failure"
    final: State
    steps: int
    message: str = ""
    counters: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


Sink = Callable[[list], None]


def run(
    grid: Grid,
    initial: State,
    cfg: StepperConfig,
    sink: Sink | None = None,
    force: bool = False,
    energy: Callable[[State], float] | None = None,
) -> RunResult:
    """Integrate from ``initial`` up to ``cfg.t_max``.

    ``sink`` is called after every step with the history, a list of the up
    to three most recent states (oldest first); the diagnostics recorder
    decides what to emit.  ``energy`` (optional) is evaluated every
    ``output_every`` steps; growth beyond ``cfg.growth_limit`` times its
    initial value stops the run as having left the small-data regime.
    """
    if not force:
        rep = compatibility_check(grid, initial.v, initial.zeta, order=0, tol=1e-6)
        if not rep.passed:
            raise ValueError(f"initial data fail order-0 compatibility: {rep.residuals}")
    stepper = Stepper(grid, cfg)
    hist: deque[State] = deque([initial], maxlen=3)
    if sink is not None:
        sink(list(hist))
    e0 = energy(initial) if energy is not None else None
    s = initial
    n = cfg.n_steps
    counters = {"steps": 0}
    for i in range(1, n + 1):
        try:
            s = stepper.step(s)
        except DegenerateMetricError as exc:
            log.error("step %d: %s", i, exc)
            return RunResult("degenerate-metric", hist[-1], i - 1, str(exc), counters)
        except (StepFailure, FloatingPointError) as exc:
            log.error("step %d: %s", i, exc)
            return RunResult("step-failure", hist[-1], i - 1, str(exc), counters)
        counters["steps"] = i
        hist.append(s)
        if sink is not None:
            sink(list(hist))
        if energy is not None and i % cfg.output_every == 0 and e0 is not None and e0 > 0:
            e = energy(s)
            if not e <= cfg.growth_limit * e0:
                msg = f"energy grew from {e0:.3e} to {e:.3e} at t = {s.t:.4g}"
                log.error(msg)
                return RunResult("energy-growth", s, i, msg, counters)
    return RunResult("ok", s, n, "", counters)
