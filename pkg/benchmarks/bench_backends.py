"""Benchmark the compiled stepping kernel against the pure-numpy twin.

Runs the same workloads through every importable backend, reports steps per
second, and checks that the final states agree.

    python3 benchmarks/bench_backends.py [--steps N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from nashflow import quadratic_two_player, rotation_game
from nashflow._kernels import available_backends
from nashflow.flow import _kernel_descriptors
from nashflow.pde import CouplingSpec, Grid, discretize_l2_game, quadratic_kernel, zero_coupling
from nashflow.problems import bilinear_zero_sum


def workloads(n_steps):
    g = Grid(dim=1, n=64)
    heat = discretize_l2_game(g, CouplingSpec(
        kernels=(quadratic_kernel(),),
        coupling=zero_coupling(1),
        sources=np.zeros((1, g.npts)),
    ))
    return [
        ("rotation (box, dim 2)", rotation_game(), [0.8, -0.9], 5e-4, n_steps),
        ("quadratic2 (free, dim 2)", quadratic_two_player(), [0.0, 0.0], 1e-3, n_steps),
        ("matching pennies (simplex, dim 4)",
         bilinear_zero_sum([[1.0, -1.0], [-1.0, 1.0]]).problem,
         [0.9, 0.1, 0.2, 0.8], 1e-2, n_steps),
        ("heat n=64 (free, dim 64)", heat, g.phi1(), 4e-5, n_steps),
    ]


def run(runner, p, x0, h, n_steps):
    desc = _kernel_descriptors(p)
    jmat = np.ascontiguousarray(p.affine[0])
    bvec = np.ascontiguousarray(p.affine[1])
    t0 = time.perf_counter()
    out = runner(jmat, bvec, np.asarray(x0, dtype=float), h, n_steps, 0.0,
                 n_steps * h, *desc, n_steps, 1.0, 0.0)
    wall = time.perf_counter() - t0
    return wall, out[2][-1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200_000)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}   steps per workload: {args.steps}")
    header = f"{'workload':36s}" + "".join(f"{name:>16s}" for name in backends)
    print(header + f"{'speedup':>10s}{'max |diff|':>12s}")
    for name, p, x0, h, n_steps in workloads(args.steps):
        walls = {}
        finals = {}
        for bname, runner in backends.items():
            wall, final = run(runner, p, x0, h, n_steps)
            walls[bname] = wall
            finals[bname] = final
        cells = "".join(
            f"{n_steps / walls[b] / 1e6:13.2f} M/s" for b in backends)
        vals = list(finals.values())
        diff = max(float(np.max(np.abs(v - vals[0]))) for v in vals)
        if len(walls) > 1:
            ws = list(walls.values())
            speed = f"{ws[0] / ws[-1]:9.1f}x"
        else:
            speed = f"{'-':>10s}"
        print(f"{name:36s}{cells}{speed}{diff:12.2e}")


if __name__ == "__main__":
    main()
