"""Benchmark: compiled blend kernel vs the numpy fallback.

Times raw batched evaluation and end-to-end Newton projection (the hot
loop of the correspondence optimizer) on a fitted unit-sphere SDF.

    python benchmarks/bench_blend.py [--sizes 1000,10000,100000]
"""
import argparse
import time
from contextlib import contextmanager

import numpy as np

from partspace.implicit import fit_sdf, kernels
from partspace.mesh import OrientedPointCloud


@contextmanager
def backend(impl):
    saved = kernels.eval_batch
    kernels.eval_batch = impl.eval_batch
    try:
        yield
    finally:
        kernels.eval_batch = saved


def sphere_grid(h_fraction=0.025, n=4000, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return fit_sdf(OrientedPointCloud(d, d),
                   bbox=(np.full(3, -1.0), np.full(3, 1.0)),
                   h_fraction=h_fraction)


def time_call(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="1000,10000,100000")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    grid = sphere_grid()
    rng = np.random.default_rng(1)

    impls = [("python", kernels.python_impl)]
    if kernels.compiled_impl is not None:
        impls.append(("compiled", kernels.compiled_impl))
    else:
        print("note: compiled extension not built; showing fallback only")

    print("%-10s %-10s %12s %14s" % ("kernel", "points", "eval [ms]", "project [ms]"))
    results = {}
    for n in sizes:
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        pts = dirs * rng.uniform(0.9, 1.1, n)[:, None]
        for name, impl in impls:
            t_eval = time_call(lambda: impl.eval_batch(
                pts, grid.origin, grid.spacing, grid.values, grid.node_gradients))
            with backend(impl):
                t_proj = time_call(lambda: grid.project_batch(pts), repeats=3)
            results[(name, n)] = (t_eval, t_proj)
            print("%-10s %-10d %12.3f %14.3f"
                  % (name, n, 1e3 * t_eval, 1e3 * t_proj))
    if kernels.compiled_impl is not None:
        for n in sizes:
            se = results[("python", n)][0] / results[("compiled", n)][0]
            sp = results[("python", n)][1] / results[("compiled", n)][1]
            print("speedup @%d: eval %.1fx, project %.1fx" % (n, se, sp))
        # both backends must agree bit-for-bit on the same inputs
        v1, g1, s1 = kernels.python_impl.eval_batch(
            pts, grid.origin, grid.spacing, grid.values, grid.node_gradients)
        v2, g2, s2 = kernels.compiled_impl.eval_batch(
            pts, grid.origin, grid.spacing, grid.values, grid.node_gradients)
        err = np.nanmax(np.abs(v1 - v2))
        print("max |value difference| between backends: %.3g" % err)


if __name__ == "__main__":
    main()
