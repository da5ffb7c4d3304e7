"""Single-mode decay rate of the stepper against the dispersion oracles.

Runs the mode (1, 0) at amplitude 1e-6 for a few depths with ``g b`` fixed
and prints the fitted rate next to the quadratic root and the exact slab
root.  The quadratic is the long-wave limit of the slab, so the two only
agree on deep slabs.
"""

import argparse
import time

import numpy as np

from freeprim.grid import Grid, GridSpec
from freeprim.model import make_state
from freeprim.stepper import StepperConfig, run
from freeprim.surfacewave import dispersion_roots, exact_slow_rate


def fitted_rate(b, gb, n, nz, dt, t_max):
    grid = Grid(GridSpec(nx=n, ny=n, nz=nz, b=b, g=gb / b))
    zeta = 1e-6 * np.cos(2 * np.pi * grid.X1)
    v = np.zeros((2,) + grid.volume_shape)
    ts, amps = [], []

    def sink(history):
        s = history[-1]
        ts.append(s.t)
        amps.append(2.0 * abs(grid.fft(s.zeta)[1, 0]))

    run(grid, make_state(grid, v, zeta), StepperConfig(dt=dt, t_max=t_max), sink=sink)
    ts, amps = np.array(ts), np.array(amps)
    sel = ts >= 1.0
    return -np.polyfit(ts[sel], np.log(amps[sel]), 1)[0]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--depths", type=float, nargs="+", default=[1.0, 4.0, 32.0])
    p.add_argument("--gb", type=float, default=1.0)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--nz", type=int, default=17)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-max", type=float, default=3.0)
    a = p.parse_args()
    ksq = (2 * np.pi) ** 2
    quad = -dispersion_roots(ksq, a.gb, 1.0)[0].real
    print(f"{'b':>6} {'fitted':>10} {'slab':>10} {'quadratic':>10} {'rel(quad)':>10} {'secs':>6}")
    for b in a.depths:
        t0 = time.perf_counter()
        rate = fitted_rate(b, a.gb, a.n, a.nz, a.dt, a.t_max)
        slab = exact_slow_rate(ksq, a.gb / b, b)
        print(f"{b:6g} {rate:10.5f} {slab:10.5f} {quad:10.5f} {abs(rate - quad) / quad:10.2%} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
