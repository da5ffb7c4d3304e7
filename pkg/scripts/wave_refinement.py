"""Wave-equation residual under joint refinement of dt and nz.

Each level halves ``dt`` and raises ``nz``; the residual should fall with
the time step since the centered differences are second order.
"""

import argparse

import numpy as np

from freeprim.cli import ic_gen
from freeprim.diagnostics import Recorder
from freeprim.grid import Grid, GridSpec
from freeprim.model import make_state
from freeprim.stepper import StepperConfig, run


def max_residual(n, nz, dt, t_max, amplitude):
    grid = Grid(GridSpec(nx=n, ny=n, nz=nz))
    v, zeta = ic_gen("surface-bump", amplitude, 0, grid)
    rec = Recorder(grid, dt, every=int(round(0.1 / dt)), wave=True)
    run(grid, make_state(grid, v, zeta), StepperConfig(dt=dt, t_max=t_max), sink=rec)
    return float(np.nanmax([r.wave_residual_rel for r in rec.finish()]))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--levels", default="17:1e-3,25:5e-4,33:2.5e-4", help="comma list of nz:dt")
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=1e-3)
    a = p.parse_args()
    for item in a.levels.split(","):
        nz, dt = item.split(":")
        r = max_residual(a.n, int(nz), float(dt), a.t_max, a.amplitude)
        print(f"nz={nz:>3} dt={float(dt):.2e}  max relative residual {r:.3e}")


if __name__ == "__main__":
    main()
