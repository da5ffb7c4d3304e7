"""Command-line front end: configuration, initial conditions, runs and reports.

Subcommands::

    simulate      --config F [--out D]
    dispersion    --gb X --nmax N
    wave-validate --config F [--t-max T]
    ic-gen        --name N --amplitude A --seed S --out F [--config C]
    diagnose      --snapshot F [--tol TOL]

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

Snapshot layout (all little-endian)::

    8 bytes   magic b"HPRIM001"
    4 bytes   uint32 header length n
    n bytes   UTF-8 JSON header (sorted keys)
    ...       float64 v1, v2 (each nz*ny*nx) then zeta (ny*nx),
              x1 fastest, then x2, then x3 from the top level down
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import re
import struct
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from freeprim.diagnostics import (
    SERIES_COLUMNS,
    Recorder,
    decay_fit,
    energy_inequality_monitor,
    energy_truncated,
    functional_E,
    functional_F,
    record_row,
)
from freeprim.geometry import DegenerateMetricError, build_metric
from freeprim.grid import Grid, GridSpec
from freeprim.model import State, boundary_residuals, compatibility_check, divergence_residual, make_state
from freeprim.stepper import StepperConfig, enforce_top_bc, run
from freeprim.surfacewave import dispersion_roots

log = logging.getLogger("freeprim")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
IC_NAMES = ("surface-bump", "shear-cell", "random-lowpass")


# ------------------------------------------------------------------ config
class ConfigError(ValueError):
    """Malformed configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass
class GridSection:
    nx: int = 32
    ny: int = 32
    nz: int = 17
    b: float = 1.0
    box_scale: float = 1.0


@dataclass
class PhysicsSection:
    g: float = 1.0
    f: float = 0.0
    P0: float = 0.0


@dataclass
class RunSection:
    dt: float = 1e-3
    t_max: float = 1.0
    output_every: int = 100
    scheme: str = "backward-euler"
    dealias: bool = True


@dataclass
class ICSection:
    name: str = "surface-bump"
    amplitude: float = 1e-3
    seed: int = 0
    gamma: float | None = None  # negative-index norm reported when set


@dataclass
class OutputSection:
    directory: str = "out"
    snapshot_every: int = 0  # 0 disables snapshots


@dataclass
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    run: RunSection = field(default_factory=RunSection)
    ic: ICSection = field(default_factory=ICSection)
    output: OutputSection = field(default_factory=OutputSection)

    def grid_spec(self) -> GridSpec:
        gs, ph = self.grid, self.physics
        return GridSpec(nx=gs.nx, ny=gs.ny, nz=gs.nz, b=gs.b, g=ph.g, f=ph.f, P0=ph.P0, box=gs.box_scale)

    def stepper_config(self) -> StepperConfig:
        r = self.run
        return StepperConfig(
            dt=r.dt, scheme=r.scheme, t_max=r.t_max, dealias=r.dealias, output_every=r.output_every
        )

    def validate(self) -> None:
        """Raise ``ValueError`` if any section violates its constraints."""
        if not self.grid.box_scale >= 1:
            raise ValueError(f"box_scale must be >= 1, got {self.grid.box_scale}")
        self.grid_spec()
        self.stepper_config()
        if self.ic.name not in IC_NAMES:
            raise ValueError(f"unknown initial condition {self.ic.name!r}; known: {', '.join(IC_NAMES)}")
        if self.ic.gamma is not None and not 0 < self.ic.gamma < 1:
            raise ValueError("ic.gamma must lie in (0, 1)")
        if self.output.snapshot_every < 0:
            raise ValueError("output.snapshot_every must be >= 0")


_SECTIONS = {s.name: s.type for s in fields(RunConfig)}
_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    # line of every "key = value" entry, for error messages
    out: dict[tuple[str, str], int] = {}
    section = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out[(section, "")] = i
        elif "=" in line:
            out[(section, line.split("=", 1)[0].strip().lower())] = i
    return out


def _convert(raw: str, typ: str):
    s = raw.strip()
    if typ == "int":
        return int(s)
    if typ == "float":
        return float(s)
    if typ == "bool":
        if s.lower() in _TRUE:
            return True
        if s.lower() in _FALSE:
            return False
        raise ValueError(f"not a boolean: {s!r}")
    if typ == "float | None":
        return None if s.lower() in ("", "none") else float(s)
    return s


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``[section]`` / ``key = value`` text into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("entry before any [section] header", exc.lineno, source) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line", line, source) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno, source) from None
    lines = _key_lines(text)
    cfg = RunConfig()
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, "")), source)
        target = getattr(cfg, sec)
        types = {f.name.lower(): (f.name, str(f.type)) for f in fields(target)}
        for key, raw in cp.items(sec):
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", lines.get((sec, key)), source)
            name, typ = types[key]
            try:
                setattr(target, name, _convert(raw, typ))
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}", lines.get((sec, key)), source) from None
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc), _blame(str(exc), lines), source) from None
    return cfg


def _blame(message: str, lines: dict[tuple[str, str], int]) -> int | None:
    # line of the first configured key named in a validation message
    words = set(re.findall(r"[A-Za-z_0-9]+", message.lower()))
    hits = [ln for (sec, key), ln in lines.items() if key and key in words]
    return min(hits) if hits else None


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", None, str(p)) from None
    return parse_config(text, source=str(p))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    out = []
    for sec, d in asdict(cfg).items():
        out.append(f"[{sec}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in d.items())
        out.append("")
    return "\n".join(out)


# ------------------------------------------------------- initial conditions
def _band(grid: Grid, nmax: float) -> np.ndarray:
    return (grid.n1**2 + grid.n2**2 <= nmax**2) & (grid.ksq > 0)


def shear_profile(grid: Grid) -> np.ndarray:
    """``q = (3 s - s^3) / 2`` with ``s = 1 + x3 / b``: ``q(-b) = 0``, ``q'(0) = 0``, ``q(0) = 1``."""
    s = 1.0 + grid.z / grid.b
    return 0.5 * (3.0 * s - s**3)


def ic_gen(name: str, amplitude: float, seed: int, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Named initial data ``(v0, zeta0)`` satisfying the order-0 compatibility conditions.

    Horizontal patterns use the lowest box modes, ``cos(2 pi x1 / L)`` etc.,
    which are the unit-torus patterns when ``L = 1``.
    """
    L = grid.box
    X1, X2 = grid.X1, grid.X2
    v = np.zeros((2,) + grid.volume_shape)
    if name == "surface-bump":
        # built from its two Fourier modes so the zero mode is exactly absent
        zh = np.zeros(grid.ksq.shape, dtype=complex)
        zh[1, 0] = zh[-1, 0] = 0.5 * amplitude
        zh[0, 1] = 0.25 * amplitude
        zeta = grid.ifft(zh)
        return v, zeta
    if name == "shear-cell":
        q = shear_profile(grid)[:, None, None]
        v[0] = amplitude * q * np.sin(2 * np.pi * X2 / L)
        v[1] = amplitude * q * np.sin(2 * np.pi * X1 / L)
        return v, np.zeros(grid.surface_shape)
    if name == "random-lowpass":
        return _random_lowpass(grid, amplitude, seed)
    raise ValueError(f"unknown initial condition {name!r}; known: {', '.join(IC_NAMES)}")


def _random_lowpass(grid: Grid, amplitude: float, seed: int):
    rng = np.random.default_rng(seed)
    if amplitude == 0:
        return np.zeros((2,) + grid.volume_shape), np.zeros(grid.surface_shape)
    shape = grid.ksq.shape
    band_v, band_z = _band(grid, 2.0), _band(grid, 1.5)

    def draw(band, lead=()):
        c = rng.standard_normal(lead + shape) + 1j * rng.standard_normal(lead + shape)
        return c * band

    zeta = grid.ifft(draw(band_z))
    zeta -= zeta.mean()
    zeta *= amplitude / np.abs(zeta).max()

    # low-degree vertical structure times the bottom factor s = 1 + x3/b
    s = 1.0 + grid.z / grid.b
    basis = np.stack([s, s * s, s**3])  # vanish at the bottom
    coef = draw(band_v, (2, 3))
    v = grid.ifft(np.einsum("cpxy,pz->czxy", coef, basis))
    v *= amplitude / max(np.abs(v).max(), 1e-300)
    J_top = build_metric(grid, zeta).J[0]
    v = enforce_top_bc(grid, v, zeta, J_top)
    v[:, -1] = 0.0
    return v, zeta


# ---------------------------------------------------------------- snapshots
MAGIC = b"HPRIM001"
FIELD_ORDER = "x1 fastest, then x2, then x3 from top"


class CorruptSnapshotError(ValueError):
    """Bad magic, truncated header or payload of the wrong length."""


@dataclass
class Snapshot:
    spec: GridSpec
    t: float
    step: int
    v: np.ndarray
    zeta: np.ndarray


def snapshot_bytes(spec: GridSpec, t: float, step: int, v: np.ndarray, zeta: np.ndarray) -> bytes:
    header = {
        "dtype": "float64 little-endian",
        "fields": ["v1", "v2", "zeta"],
        "grid": {"nx": spec.nx, "ny": spec.ny, "nz": spec.nz, "b": spec.b, "box_scale": spec.box},
        "layout": FIELD_ORDER,
        "physics": {"g": spec.g, "f": spec.f, "P0": spec.P0},
        "step": int(step),
        "t": float(t),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    vt = np.ascontiguousarray(np.swapaxes(v, -1, -2), dtype="<f8")  # (2, nz, ny, nx)
    zt = np.ascontiguousarray(zeta.T, dtype="<f8")
    return MAGIC + struct.pack("<I", len(hb)) + hb + vt.tobytes() + zt.tobytes()


def write_snapshot(path: str | Path, spec: GridSpec, t: float, step: int, v: np.ndarray, zeta: np.ndarray) -> None:
    Path(path).write_bytes(snapshot_bytes(spec, t, step, v, zeta))


def read_snapshot(path: str | Path) -> Snapshot:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != MAGIC:
        raise CorruptSnapshotError(f"{path}: bad magic")
    (n,) = struct.unpack("<I", data[8:12])
    if 12 + n > len(data):
        raise CorruptSnapshotError(f"{path}: header length {n} exceeds file size")
    try:
        h = json.loads(data[12 : 12 + n].decode("utf-8"))
        gr, ph = h["grid"], h["physics"]
        spec = GridSpec(
            nx=gr["nx"], ny=gr["ny"], nz=gr["nz"], b=gr["b"], box=gr["box_scale"],
            g=ph["g"], f=ph["f"], P0=ph["P0"],
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptSnapshotError(f"{path}: bad header ({exc})") from None
    nv = spec.nz * spec.nx * spec.ny
    ns = spec.nx * spec.ny
    payload = data[12 + n :]
    if len(payload) != 8 * (2 * nv + ns):
        raise CorruptSnapshotError(f"{path}: payload has {len(payload)} bytes, expected {8 * (2 * nv + ns)}")
    arr = np.frombuffer(payload, dtype="<f8").astype(float)
    v = np.swapaxes(arr[: 2 * nv].reshape(2, spec.nz, spec.ny, spec.nx), -1, -2).copy()
    zeta = arr[2 * nv :].reshape(spec.ny, spec.nx).T.copy()
    return Snapshot(spec=spec, t=float(h["t"]), step=int(h["step"]), v=v, zeta=zeta)


# ---------------------------------------------------------------- simulate
def write_series(path: str | Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for r in records:
            w.writerow([format(float(x), ".17g") for x in record_row(r)])


def read_series(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(cols))
    return {c: data[:, i] for i, c in enumerate(cols)}


@dataclass
class SimulationOutcome:
    status: str
    records: list
    final: State | None
    summary: dict


def _attach_log(out: Path) -> logging.Handler:
    h = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(h)
    log.setLevel(logging.INFO)
    return h


def _summarize(records, steps: int) -> dict:
    t = np.array([r.t for r in records])
    E = np.array([r.E for r in records])
    out = {"steps": steps, "records": len(records)}
    out["max_mass"] = float(np.max(np.abs([r.mass for r in records]))) if records else math.nan
    for key in ("div_residual", "top_bc_residual", "bottom_bc_residual", "wave_residual_rel"):
        vals = np.array([getattr(r, key) for r in records], dtype=float)
        out[f"max_{key}"] = float(np.nanmax(vals)) if np.isfinite(vals).any() else math.nan
    out["decay_rate"] = out["decay_r2"] = out["theta_hat"] = math.nan
    ok = np.isfinite(E) & (E > 0)
    if ok.sum() >= 3:
        fit = decay_fit(t[ok], E[ok], "exponential", exclude=0.1)
        out["decay_rate"], out["decay_r2"] = fit.rate, fit.r2
    if len(records) >= 2:
        out["theta_hat"] = energy_inequality_monitor(records).theta_hat
    return out


def simulate(cfg: RunConfig, out_dir: str | Path | None = None, quiet: bool = False) -> SimulationOutcome:
    """Run ``cfg`` and write ``series.csv``, ``run.log`` and snapshots into ``out_dir``."""
    out = Path(out_dir if out_dir is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_log(out)
    try:
        return _simulate(cfg, out, quiet)
    finally:
        log.removeHandler(handler)
        handler.close()


def _simulate(cfg: RunConfig, out: Path, quiet: bool) -> SimulationOutcome:
    spec = cfg.grid_spec()
    scfg = cfg.stepper_config()
    grid = Grid(spec)
    log.info("config:\n%s", serialize_config(cfg))
    v0, z0 = ic_gen(cfg.ic.name, cfg.ic.amplitude, cfg.ic.seed, grid)
    try:
        s0 = make_state(grid, v0, z0, j_floor=scfg.j_floor)
    except DegenerateMetricError as exc:
        log.error("initial data: %s", exc)
        write_series(out / "series.csv", [])
        return SimulationOutcome("degenerate-metric", [], None, {})

    rec = Recorder(grid, scfg.dt, every=scfg.output_every, gamma=cfg.ic.gamma)
    snap_every = cfg.output.snapshot_every
    step_no = [0]

    def sink(history):
        rec(history)
        n = step_no[0]
        if snap_every and n % snap_every == 0:
            s = history[-1]
            write_snapshot(out / f"snap_{n}.bin", spec, s.t, n, s.v, s.zeta)
        step_no[0] += 1

    result = run(grid, s0, scfg, sink=sink, energy=lambda s: energy_truncated(grid, s))
    records = rec.finish()
    write_series(out / "series.csv", records)
    summary = _summarize(records, result.steps)
    summary["status"] = result.status
    log.info("finished: %s", json.dumps(summary, sort_keys=True))
    if not result.ok:
        log.error("run stopped: %s (%s)", result.status, result.message)
    if not quiet:
        print(_format_summary(summary))
    return SimulationOutcome(result.status, records, result.final, summary)


def _format_summary(summary: dict) -> str:
    keys = [
        "status", "steps", "records", "decay_rate", "decay_r2", "theta_hat", "max_mass",
        "max_div_residual", "max_top_bc_residual", "max_bottom_bc_residual", "max_wave_residual_rel",
    ]
    return "\n".join(f"{k:24s} {summary.get(k)}" for k in keys)


# ----------------------------------------------------------- other commands
def dispersion_table(gb: float, n_max: int) -> list[tuple]:
    """Rows ``(n, ksq, re l1, im l1, re l2, im l2)`` for ``|n| = 1 .. n_max`` (unit box, g b = gb)."""
    if not gb > 0:
        raise ValueError("gb must be positive")
    rows = []
    for n in range(1, n_max + 1):
        ksq = (2 * np.pi * n) ** 2
        l1, l2 = dispersion_roots(ksq, gb, 1.0)
        rows.append((n, ksq, l1.real, l1.imag, l2.real, l2.imag))
    return rows


def wave_validate(cfg: RunConfig, t_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Short run; returns output times and the relative wave-equation residual at each."""
    if t_max is not None:
        cfg.run.t_max = t_max
    spec = cfg.grid_spec()
    scfg = cfg.stepper_config()
    grid = Grid(spec)
    v0, z0 = ic_gen(cfg.ic.name, cfg.ic.amplitude, cfg.ic.seed, grid)
    rec = Recorder(grid, scfg.dt, every=scfg.output_every, wave=True)
    res = run(grid, make_state(grid, v0, z0), scfg, sink=rec)
    if not res.ok:
        raise RuntimeError(f"run stopped: {res.status} ({res.message})")
    recs = [r for r in rec.finish() if np.isfinite(r.wave_residual_rel)]
    return np.array([r.t for r in recs]), np.array([r.wave_residual_rel for r in recs])


@dataclass
class DiagnoseReport:
    rows: list[tuple[str, float, bool | None]]  # (check, value, passed or None for informational)

    @property
    def passed(self) -> bool:
        return all(p is not False for _, _, p in self.rows)

    def format(self) -> str:
        lines = [f"{'check':28s} {'value':>14s}  status"]
        for name, val, p in self.rows:
            status = "info" if p is None else ("PASS" if p else "FAIL")
            lines.append(f"{name:28s} {val:14.6e}  {status}")
        return "\n".join(lines)


def diagnose(snap: Snapshot, tol: float = 1e-6) -> DiagnoseReport:
    """Recompute the state invariants of a snapshot and tabulate them."""
    grid = Grid(snap.spec)
    rows: list[tuple[str, float, bool | None]] = []
    mass = grid.area * float(snap.zeta.mean())
    rows.append(("mass", mass, abs(mass) <= tol))
    try:
        s = make_state(grid, snap.v, snap.zeta, t=snap.t)
    except DegenerateMetricError as exc:
        rows.append(("min_J", exc.min_J, False))
        return DiagnoseReport(rows)
    top, bottom = boundary_residuals(grid, s)
    rows.append(("min_J", s.metric.min_J, s.metric.min_J > 0.1))
    rows.append(("bottom_bc", float(np.abs(bottom).max()), float(np.abs(bottom).max()) <= tol))
    rows.append(("top_bc", float(np.abs(top).max()), float(np.abs(top).max()) <= tol))
    rows.append(("div_residual", divergence_residual(grid, s), None))
    comp = compatibility_check(grid, snap.v, snap.zeta, order=0, tol=tol)
    rows.append(("compatibility_order0", max(comp.residuals.values()), comp.passed))
    # second time derivatives need a trajectory; E is reported without them
    rows.append(("E (no dt^2 terms)", functional_E(grid, s, None), None))
    rows.append(("F", functional_F(grid, s), None))
    return DiagnoseReport(rows)


# -------------------------------------------------------------------- main
class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freeprim", description="Free-surface primitive-equation simulator and diagnostics.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="output directory (overrides [output] directory)")

    d = sub.add_parser("dispersion", help="print the damped-wave dispersion table")
    d.add_argument("--gb", type=float, required=True)
    d.add_argument("--nmax", type=int, required=True)

    w = sub.add_parser("wave-validate", help="check the surface wave equation along a short run")
    w.add_argument("--config", required=True)
    w.add_argument("--t-max", type=float, default=None)

    i = sub.add_parser("ic-gen", help="write an initial condition as a snapshot")
    i.add_argument("--name", required=True, choices=IC_NAMES)
    i.add_argument("--amplitude", type=float, required=True)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.add_argument("--config", default=None, help="take grid and physics from this config")

    g = sub.add_parser("diagnose", help="check the invariants of a snapshot")
    g.add_argument("--snapshot", required=True)
    g.add_argument("--tol", type=float, default=1e-6)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorruptSnapshotError as exc:
        print(f"corrupt snapshot: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _dispatch(args) -> int:
    if args.command == "simulate":
        cfg = load_config(args.config)
        try:
            outcome = simulate(cfg, args.out)
        except Exception as exc:  # fatal: record and report
            out = Path(args.out or cfg.output.directory)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "run.log", "a", encoding="utf-8") as fh:
                fh.write(f"FATAL {type(exc).__name__}: {exc}\n")
            print(f"runtime failure: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK if outcome.status == "ok" else EXIT_RUNTIME

    if args.command == "dispersion":
        if not args.gb > 0 or args.nmax < 1:
            print("dispersion: need gb > 0 and nmax >= 1", file=sys.stderr)
            return EXIT_USAGE
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["n", "ksq", "re_l1", "im_l1", "re_l2", "im_l2"])
        for row in dispersion_table(args.gb, args.nmax):
            w.writerow([row[0]] + [format(x, ".17g") for x in row[1:]])
        return EXIT_OK

    if args.command == "wave-validate":
        cfg = load_config(args.config)
        try:
            t, rel = wave_validate(cfg, args.t_max)
        except (RuntimeError, DegenerateMetricError) as exc:
            print(f"runtime failure: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print("t,wave_res_rel")
        for ti, ri in zip(t, rel):
            print(f"{ti:.17g},{ri:.17g}")
        print(f"max {np.max(rel) if rel.size else float('nan'):.6e}")
        return EXIT_OK

    if args.command == "ic-gen":
        spec = load_config(args.config).grid_spec() if args.config else GridSpec()
        grid = Grid(spec)
        v, z = ic_gen(args.name, args.amplitude, args.seed, grid)
        write_snapshot(args.out, spec, 0.0, 0, v, z)
        return EXIT_OK

    if args.command == "diagnose":
        rep = diagnose(read_snapshot(args.snapshot), tol=args.tol)
        print(rep.format())
        print("overall", "PASS" if rep.passed else "FAIL")
        return EXIT_OK
    raise AssertionError(args.command)  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
