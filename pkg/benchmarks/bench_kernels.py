"""Time the numba kernels against the pure-numpy reference path.

    python3 benchmarks/bench_kernels.py [--grid 64 128 256] [--repeat 50]

Each kernel module is imported twice, once per value of BISCHRO_NUMBA, so
both paths run in the same interpreter.
"""

import argparse
import importlib
import os
import sys
import timeit

import numpy as np


def load(flag):
    os.environ["BISCHRO_NUMBA"] = flag
    sys.modules.pop("bischro._kernels", None)
    return importlib.import_module("bischro._kernels")


def sample(N, rng):
    from bischro.spectral import diff_matrix
    from bischro.identities import generic_loop
    from bischro.geometry import SphereS2

    U = generic_loop(SphereS2(), N, seed=int(rng.integers(1 << 30)))
    return U, diff_matrix(N)


def bench(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)

    nb, ref = load("1"), load("0")
    if not nb.USE_NUMBA:
        print("numba unavailable; only the numpy path can be timed")
    rng = np.random.default_rng(0)
    params = (1.0, 0.5, 0.7, -0.4)

    print(f"{'kernel':<16}{'N':>6}{'numpy [us]':>14}{'numba [us]':>14}{'speedup':>10}{'max diff':>12}")
    for N in args.grid:
        U, D = sample(N, rng)
        Y = rng.standard_normal((3, N, 3))
        cases = {
            "flow_rhs": (lambda k: k.sphere_flow_rhs(U, D, *params)),
            "project": (lambda k: k.sphere_project(U, Y[0])),
            "curvature": (lambda k: k.sphere_curvature(U, Y[0], Y[1], Y[2])),
        }
        for name, call in cases.items():
            t_ref = bench(lambda: call(ref), args.repeat)
            t_nb = bench(lambda: call(nb), args.repeat)
            diff = float(np.max(np.abs(call(ref) - call(nb))))
            print(f"{name:<16}{N:>6}{t_ref * 1e6:>14.1f}{t_nb * 1e6:>14.1f}{t_ref / t_nb:>10.2f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
