"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 3] [--N 256]

Each kernel is run on identical inputs through both backends; the table
reports the best wall time of ``--repeat`` runs and the max abs difference
between the two outputs.
"""
import argparse
import time

import numpy as np

from riccilab import kernels
from riccilab.flow import round_state
from riccilab.reduced import BackwardTrajectory, shrinking_sphere_trajectory


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(N):
    s = round_state(3, N, 1.0)
    s = s.with_a(s.a + 0.05 * np.cos(2 * s.profile.x))
    geo = s.kernel_geometry()
    bnd = ((0, 0.0, 0.0), (0, 0.0, 0.0))

    def rk4(backend):
        f = kernels.get("rk4_step", backend)
        return lambda: np.concatenate([np.atleast_1d(v) for v in
                                       f(s.a, s.lam, *geo, *bnd, 1e-5, False)])

    def evolve(backend):
        f = kernels.get("evolve", backend)
        return lambda: f(s.a, s.lam, *geo, None, 0.0, 0.02, 1e-2, 0.2, 1e-14, 1e6, False, 10 ** 7)[0]

    bt = BackwardTrajectory(shrinking_sphere_trajectory(3, N, 0.02, 0.2, 201))
    table, hs = bt.table(0.1, 256)
    y0 = np.linspace(0.1, 8.0, N + 1)

    def shoot(backend):
        f = kernels.get("shoot_many", backend)
        return lambda: f(table, hs, 256, bt.profile.dx, bt.poles, bt.xmax, y0)[0]

    return [("rk4_step", rk4), ("evolve to t=0.02", evolve), (f"shoot_many ({N + 1} paths)", shoot)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--N", type=int, default=256)
    args = ap.parse_args()
    try:
        kernels.get("rk4_step", "compiled")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<28}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, make in cases(args.N):
        tp, op = best_of(make("python"), args.repeat)
        tc, oc = best_of(make("compiled"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(op) - np.asarray(oc))))
        print(f"{name:<28}{tp:>12.4g}{tc:>14.4g}{tp / tc:>10.1f}{diff:>13.2e}")


if __name__ == "__main__":
    main()
