"""Compare the compiled and numpy marching kernels on a linear Goursat solve.

Run: python3 benchmarks/bench_march.py [--sizes 128 256 512] [--repeat 3]
"""

import argparse
import time

import numpy as np

from charfront import kernels
from charfront.goursat import CharGrid, LinearGoursatOp, Rectangle, solve_linear

OP = LinearGoursatOp(lambda v, e: 0.3 + 0.2 * np.sin(v + e), lambda v, e: 0.5 * v * e - 0.2,
                     lambda v, e: -0.4 + 0.1 * v, lambda v, e: 0.25 * np.cos(2 * v - e))


def best_time(backend, grid, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = solve_linear(OP, grid, lambda v, e: np.exp(v) * np.sin(e), 1.0, lambda v: 1 + v, 1.0,
                           backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    have = kernels.available()
    print(f"backends: {', '.join(have)}")
    print(f"{'n':>6} {'python [s]':>12} {'compiled [s]':>13} {'speedup':>8} {'max |diff|':>11}")
    for n in args.sizes:
        grid = CharGrid.uniform(Rectangle(0, 1, 0, 1), n + 1, n + 1)
        tp, sp = best_time("python", grid, args.repeat)
        if "compiled" in have:
            tc, sc = best_time("compiled", grid, args.repeat)
            diff = max(np.max(np.abs(sp.X - sc.X)), np.max(np.abs(sp.Y - sc.Y)))
            print(f"{n:6d} {tp:12.4f} {tc:13.4f} {tp / tc:8.1f} {diff:11.2e}")
        else:
            print(f"{n:6d} {tp:12.4f} {'-':>13} {'-':>8} {'-':>11}")


if __name__ == "__main__":
    main()
