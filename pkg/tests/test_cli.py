import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeprim import cli
from freeprim.cli import (
    ConfigError,
    CorruptSnapshotError,
    RunConfig,
    diagnose,
    ic_gen,
    main,
    parse_config,
    read_series,
    read_snapshot,
    serialize_config,
    simulate,
    snapshot_bytes,
    write_snapshot,
)
from freeprim.grid import Grid, GridSpec
from freeprim.model import boundary_residuals, compatibility_check, make_state

ROOT = Path(__file__).resolve().parents[1]
BUNDLED = ROOT / "configs" / "torus-small.cfg"


def _tiny_cfg(tmp_path, **run):
    cfg = RunConfig()
    cfg.grid.nx = cfg.grid.ny = 8
    cfg.grid.nz = 9
    cfg.run.dt = 1e-2
    cfg.run.t_max = run.get("t_max", 0.05)
    cfg.run.output_every = 1
    cfg.output.directory = str(tmp_path / "out")
    return cfg


# -------------------------------------------------------------------- config
def test_bundled_config_parses():
    cfg = parse_config(BUNDLED.read_text())
    assert cfg.ic.name == "surface-bump" and cfg.grid.box_scale == 1.0


@given(
    nx=st.sampled_from([8, 16, 32]),
    nz=st.integers(5, 40),
    b=st.floats(0.1, 50.0),
    box=st.floats(1.0, 16.0),
    g=st.floats(1e-3, 10.0),
    f=st.floats(0.0, 3.0),
    dt=st.floats(1e-5, 1e-1),
    dealias=st.booleans(),
    scheme=st.sampled_from(["backward-euler", "bdf2"]),
    name=st.sampled_from(cli.IC_NAMES),
    gamma=st.one_of(st.none(), st.floats(0.05, 0.95)),
    directory=st.text("abcxyz_/-.", min_size=1, max_size=12).filter(lambda s: s.strip() == s),
)
def test_config_round_trip(nx, nz, b, box, g, f, dt, dealias, scheme, name, gamma, directory):
    cfg = RunConfig()
    cfg.grid.nx, cfg.grid.nz, cfg.grid.b, cfg.grid.box_scale = nx, nz, b, box
    cfg.physics.g, cfg.physics.f = g, f
    cfg.run.dt, cfg.run.t_max, cfg.run.dealias, cfg.run.scheme = dt, 10 * dt, dealias, scheme
    cfg.ic.name, cfg.ic.gamma = name, gamma
    cfg.output.directory = directory
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


@pytest.mark.parametrize(
    "text, line",
    [
        ("nx = 8\n", 1),
        ("[grid]\nnx = 8\n[bogus]\nx = 1\n", 3),
        ("[grid]\n\nnx = eight\n", 3),
        ("[grid]\nnx = 8\nnx = 16\n", 3),
        ("[run]\ndt = 1e-3\nspeed = 2\n", 3),
        ("[grid]\nnz = 9\n\n\nb = -1\n", 5),
        ("[grid]\nbox_scale = 0.5\n", 2),
        ("[run]\nscheme = rk4\n", 2),
        ("[grid]\n  nx\n", 2),
    ],
)
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text, source="x.cfg")
    assert info.value.line == line
    assert f"x.cfg:{line}" in str(info.value)


def test_config_defaults_and_comments():
    cfg = parse_config("[ic]\nname = shear-cell  # inline\n; comment\namplitude = 0.5\ngamma = none\n")
    assert cfg.ic.name == "shear-cell" and cfg.ic.amplitude == 0.5 and cfg.ic.gamma is None
    assert cfg.grid == RunConfig().grid


# ------------------------------------------------------------------------ IC
@pytest.fixture(scope="module")
def g16():
    return Grid(GridSpec(nx=16, ny=16, nz=17))


def test_ic_surface_bump(g16):
    v, z = ic_gen("surface-bump", 0.0, 0, g16)
    assert np.abs(v).max() == 0.0 and np.abs(z).max() == 0.0
    v, z = ic_gen("surface-bump", 1e-3, 0, g16)
    assert abs(z.mean()) < 1e-20
    np.testing.assert_allclose(z, 1e-3 * (np.cos(2 * np.pi * g16.X1) + 0.5 * np.cos(2 * np.pi * g16.X2)), atol=1e-18)


def test_ic_shear_cell_exact_bcs(g16):
    v, z = ic_gen("shear-cell", 0.2, 0, g16)
    s = make_state(g16, v, z)
    top, bottom = boundary_residuals(g16, s)
    assert np.abs(top).max() <= 1e-10 and np.abs(bottom).max() <= 1e-10
    q = cli.shear_profile(g16)
    assert q[-1] == pytest.approx(0.0, abs=1e-15) and q[0] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("name", cli.IC_NAMES)
def test_ic_order0_compatible(g16, name, seed):
    v, z = ic_gen(name, 1e-2, seed, g16)
    rep = compatibility_check(g16, v, z, order=0, tol=1e-8)
    assert rep.passed, rep.residuals
    assert abs(z.mean()) < 1e-16


def test_ic_random_is_seeded(g16):
    a = ic_gen("random-lowpass", 1e-2, 5, g16)
    b = ic_gen("random-lowpass", 1e-2, 5, g16)
    c = ic_gen("random-lowpass", 1e-2, 6, g16)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[1], c[1])


def test_ic_unknown(g16):
    with pytest.raises(ValueError):
        ic_gen("vortex", 1.0, 0, g16)


def test_ic_box_scale_uses_lowest_modes():
    g = Grid(GridSpec(nx=16, ny=16, nz=9, box=8.0))
    _, z = ic_gen("surface-bump", 1.0, 0, g)
    np.testing.assert_allclose(z, np.cos(2 * np.pi * g.X1 / 8) + 0.5 * np.cos(2 * np.pi * g.X2 / 8), atol=1e-14)


# ----------------------------------------------------------------- snapshots
def test_snapshot_layout_and_round_trip(tmp_path, g16):
    v, z = ic_gen("random-lowpass", 1e-2, 3, g16)
    p = tmp_path / "s.bin"
    write_snapshot(p, g16.spec, 0.25, 7, v, z)
    data = p.read_bytes()
    assert data[:8] == b"HPRIM001"
    (n,) = struct.unpack("<I", data[8:12])
    payload = np.frombuffer(data[12 + n :], dtype="<f8")
    # x1 fastest: second value of v1 is at (level 0, x1 index 1, x2 index 0)
    assert payload[1] == v[0, 0, 1, 0]
    assert payload[g16.nx] == v[0, 0, 0, 1]
    snap = read_snapshot(p)
    assert snap.t == 0.25 and snap.step == 7 and snap.spec == g16.spec
    np.testing.assert_array_equal(snap.v, v)
    np.testing.assert_array_equal(snap.zeta, z)
    # deterministic bytes
    assert snapshot_bytes(snap.spec, snap.t, snap.step, snap.v, snap.zeta) == data


def test_corrupt_snapshots(tmp_path, g16):
    good = snapshot_bytes(g16.spec, 0.0, 0, *ic_gen("surface-bump", 1e-3, 0, g16))
    for bad in (b"XPRIM001" + good[8:], good[:-8], good[:12] + b"{", good[:8] + struct.pack("<I", 10**6) + good[12:]):
        p = tmp_path / "bad.bin"
        p.write_bytes(bad)
        with pytest.raises(CorruptSnapshotError):
            read_snapshot(p)
    p = tmp_path / "bad.bin"
    p.write_bytes(good[:-8])
    assert main(["diagnose", "--snapshot", str(p)]) == 2


def test_diagnose_zero_state(tmp_path, g16):
    z = np.zeros(g16.surface_shape)
    write_snapshot(tmp_path / "z.bin", g16.spec, 0.0, 0, np.zeros((2,) + g16.volume_shape), z)
    rep = diagnose(read_snapshot(tmp_path / "z.bin"))
    assert rep.passed
    vals = {name: val for name, val, _ in rep.rows}
    assert vals["E (no dt^2 terms)"] == 0.0 and vals["F"] == 0.0


def test_diagnose_reports_bottom_failure(tmp_path, g16, capsys):
    v, z = ic_gen("shear-cell", 0.1, 0, g16)
    v[:, -1] = 1e-3  # hand-corrupted bottom row
    write_snapshot(tmp_path / "c.bin", g16.spec, 0.0, 0, v, z)
    rep = diagnose(read_snapshot(tmp_path / "c.bin"))
    status = {name: ok for name, _, ok in rep.rows}
    # the top Neumann residual moves too (the collocation row couples all levels)
    assert status["bottom_bc"] is False and not rep.passed
    assert main(["diagnose", "--snapshot", str(tmp_path / "c.bin")]) == 0
    out = capsys.readouterr().out
    assert "bottom_bc" in out and "FAIL" in out


# ------------------------------------------------------------------ commands
def test_simulate_zero_length(tmp_path):
    cfg = _tiny_cfg(tmp_path, t_max=0.0)
    out = simulate(cfg, quiet=True)
    assert out.status == "ok"
    lines = (tmp_path / "out" / "series.csv").read_text().splitlines()
    assert lines[0] == ",".join(cli.SERIES_COLUMNS)
    assert len(lines) == 2
    assert lines[1].split(",")[9] == "nan"


def test_simulate_writes_outputs(tmp_path):
    cfg = _tiny_cfg(tmp_path)
    cfg.output.snapshot_every = 2
    out = simulate(cfg, quiet=True)
    d = tmp_path / "out"
    assert sorted(p.name for p in d.glob("snap_*.bin")) == ["snap_0.bin", "snap_2.bin", "snap_4.bin"]
    series = read_series(d / "series.csv")
    np.testing.assert_allclose(series["t"], np.arange(6) * 0.01, atol=1e-12)
    assert (d / "run.log").read_text().count("finished") == 1
    assert read_snapshot(d / "snap_4.bin").t == pytest.approx(0.04)
    assert out.summary["max_bottom_bc_residual"] == 0.0


def test_simulate_runtime_failure_exit_code(tmp_path):
    cfg = _tiny_cfg(tmp_path)
    cfg.ic.amplitude = 0.5  # folds the coordinate map
    p = tmp_path / "c.cfg"
    p.write_text(serialize_config(cfg))
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "Jacobian" in (tmp_path / "o" / "run.log").read_text()


def test_malformed_config_exit_1_no_outputs(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[grid]\nnx = 7\n")
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_usage_errors_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["dispersion", "--gb"])
    assert info.value.code == 1
    assert main(["dispersion", "--gb", "-1", "--nmax", "2"]) == 1


def test_dispersion_command(capsys):
    assert main(["dispersion", "--gb", "1", "--nmax", "2"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0] == "n,ksq,re_l1,im_l1,re_l2,im_l2"
    first = rows[1].split(",")
    assert first[0] == "1" and float(first[2]) == pytest.approx(-1.0267010458235495, rel=1e-15)
    assert len(rows) == 3


def test_wave_validate_zero_amplitude(tmp_path, capsys):
    cfg = _tiny_cfg(tmp_path)
    cfg.ic.amplitude = 0.0
    p = tmp_path / "z.cfg"
    p.write_text(serialize_config(cfg))
    assert main(["wave-validate", "--config", str(p)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[-1] == "max 0.000000e+00"


def test_ic_gen_command(tmp_path):
    p = tmp_path / "ic.bin"
    assert main(["ic-gen", "--name", "shear-cell", "--amplitude", "0.1", "--seed", "0", "--out", str(p)]) == 0
    snap = read_snapshot(p)
    assert snap.spec == GridSpec() and snap.t == 0.0


def test_bundled_config_end_to_end(tmp_path):
    # the bundled example runs as a module and produces a monotone E column
    res = subprocess.run(
        [sys.executable, "-m", "freeprim", "simulate", "--config", str(BUNDLED), "--out", str(tmp_path)],
        capture_output=True, text=True, timeout=600,
    )
    assert res.returncode == 0, res.stderr
    s = read_series(tmp_path / "series.csv")
    E = s["E"]
    assert np.all(np.diff(E**2) <= 1e-8 * E[0] ** 2)
    assert np.all(np.abs(s["mass"]) <= 1e-10)
