"""Benchmark the compiled thinning/walk kernels against the pure-Python port.

Usage: python benchmarks/bench_kernels.py [--sizes 32,64,128] [--repeats 5]

Both backends implement identical algorithms (see scribblegate.scribblegen);
this script reports wall-clock medians and the speedup ratio, and verifies
that outputs agree bitwise on every benchmarked input.
"""
import argparse
import importlib
import time

import numpy as np


def load_backends():
    compiled = None
    try:
        compiled = importlib.import_module("scribblegate.scribblegen._kernels")
    except ImportError:
        pass
    pure = importlib.import_module("scribblegate.scribblegen._kernels_py")
    return compiled, pure


def blob_mask(rng, size):
    field = rng.random_sample((size, size))
    for _ in range(2):
        padded = np.pad(field, 1, mode="edge")
        field = sum(padded[i:i + size, j:j + size]
                    for i in range(3) for j in range(3)) / 9.0
    return (field > np.quantile(field, 0.45)).astype(np.uint8)


def time_call(fn, repeats):
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best.append(time.perf_counter() - t0)
    return float(np.median(best)), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="32,64,128,256")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--walk-iters", type=int, default=20000)
    args = ap.parse_args()

    compiled, pure = load_backends()
    if compiled is None:
        print("compiled backend unavailable; showing pure-Python times only")

    rng = np.random.RandomState(0)
    sizes = [int(s) for s in args.sizes.split(",")]

    print("%-22s %12s %12s %9s" % ("kernel", "pure (ms)", "compiled (ms)",
                                   "speedup"))
    for size in sizes:
        mask = blob_mask(rng, size)

        t_pure, out_pure = time_call(lambda: pure.thin(mask.copy()),
                                     args.repeats)
        row = "thin %dx%d" % (size, size)
        if compiled is not None:
            t_comp, out_comp = time_call(lambda: compiled.thin(mask.copy()),
                                         args.repeats)
            assert np.array_equal(out_pure, out_comp), "thin outputs diverge"
            print("%-22s %12.3f %12.3f %8.1fx"
                  % (row, t_pure * 1e3, t_comp * 1e3, t_pure / t_comp))
        else:
            print("%-22s %12.3f %12s %9s" % (row, t_pure * 1e3, "-", "-"))

        deltas = rng.randint(-1, 2, (args.walk_iters, 2)).astype(np.int8)
        ys, xs = np.nonzero(mask)
        start = int(ys[0]), int(xs[0])
        t_pure, out_pure = time_call(
            lambda: pure.random_walk(mask, deltas, start[0], start[1]),
            args.repeats)
        row = "walk %dx%d @%dk" % (size, size, args.walk_iters // 1000)
        if compiled is not None:
            t_comp, out_comp = time_call(
                lambda: compiled.random_walk(mask, deltas, start[0], start[1]),
                args.repeats)
            assert np.array_equal(out_pure, out_comp), "walk outputs diverge"
            print("%-22s %12.3f %12.3f %8.1fx"
                  % (row, t_pure * 1e3, t_comp * 1e3, t_pure / t_comp))
        else:
            print("%-22s %12.3f %12s %9s" % (row, t_pure * 1e3, "-", "-"))


if __name__ == "__main__":
    main()
