"""Divergence identity residual against the number of vertical levels.

Shows the two limits: the Chebyshev tail of the metric (the smooth cutoff
converges sub-geometrically) dominates at small ``nz``; round-off in the
collocation derivative, growing like ``nz^2``, dominates at large ``nz``.
"""

import argparse

import numpy as np

from freeprim.geometry import build_metric, div_Astar
from freeprim.grid import Grid, GridSpec
from freeprim.model import reconstruct_w


def band_field(grid, rng, radius, lead=()):
    shape = lead + grid.ksq.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return grid.ifft(c * ((grid.n1**2 + grid.n2**2 <= radius**2) & (grid.ksq > 0)))


def worst_residual(nz, seed, samples, flat=False):
    g = Grid(GridSpec(nx=8, ny=8, nz=nz))
    rng = np.random.default_rng(seed)
    s = 1.0 + g.z / g.b
    basis = np.stack([np.ones_like(s), s, s * s, s**3])
    worst = 0.0
    for _ in range(samples):
        zeta = band_field(g, rng, 1.5)
        zeta *= rng.uniform(0.0, 0.1) * g.b / np.abs(zeta).max()
        v = np.einsum("cpxy,pz->czxy", band_field(g, rng, 2.0, lead=(2, 4)), basis)
        m = build_metric(g, 0.0 * zeta if flat else zeta)
        res = div_Astar(g, v, m) + m.K * g.vertical_diff(reconstruct_w(g, v, m))
        grad = np.abs(np.stack([g.dx(v), g.dy(v), g.vertical_diff(v)])).max()
        worst = max(worst, np.abs(res).max() / grad)
    return worst


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--nz", type=int, nargs="+", default=[33, 65, 129, 193, 257, 289, 321])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--samples", type=int, default=100)
    a = p.parse_args()
    print(f"{'nz':>4} " + " ".join(f"{'seed ' + str(s):>10}" for s in a.seeds) + f" {'flat':>10}")
    for nz in a.nz:
        vals = [worst_residual(nz, s, a.samples) for s in a.seeds]
        flat = worst_residual(nz, a.seeds[0], a.samples, flat=True)
        print(f"{nz:4d} " + " ".join(f"{x:10.2e}" for x in vals) + f" {flat:10.2e}")


if __name__ == "__main__":
    main()
