"""Time the compiled and pure-Python kernels side by side.

Usage::

    python benchmarks/bench_kernels.py [--size 64] [--views 90] [--repeat 3]

Reports best-of-``repeat`` wall time for ray tracing (one fan-beam system
matrix) and dart throwing (one Poisson-disk pass), checks that both
backends return identical results, and prints the speedup.
"""
import argparse
import time

import numpy as np

from urcn._backend import compiled_kernels, python_kernels
from urcn.operators import FanBeamOperator


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def ray_endpoints(size, n_views):
    # reuse the operator's geometry so the workload matches real use
    op = FanBeamOperator(image_size=size, n_views=n_views)
    src, dst = op.ray_endpoints()
    return src, dst, op.pixel_pitch


def dart_inputs(size, seed=0):
    rng = np.random.default_rng(seed)
    order = rng.permutation(size * size).astype(np.int64)
    yy, xx = np.mgrid[:size, :size] - size // 2
    radius = 1.2 * np.sqrt(1.0 + np.hypot(yy, xx) / (size / 2.0))
    excluded = np.zeros((size, size), np.uint8)
    return order, np.ascontiguousarray(radius), excluded


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--views", type=int, default=90)
    ap.add_argument("--mask-size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if compiled_kernels is None:
        print("compiled extension not built; only the Python backend is timed")
    backends = {"python": python_kernels}
    if compiled_kernels is not None:
        backends["compiled"] = compiled_kernels

    src, dst, pitch = ray_endpoints(args.size, args.views)
    order, radius, excluded = dart_inputs(args.mask_size)
    jobs = {
        f"trace_rays ({len(src)} rays, {args.size}x{args.size})":
            lambda k: k.trace_rays(src, dst, args.size, pitch),
        f"dart_throw ({args.mask_size}x{args.mask_size})":
            lambda k: np.asarray(k.dart_throw(order, radius, excluded)),
    }

    print(f"{'kernel':<40s} {'backend':<9s} {'seconds':>10s}")
    for label, job in jobs.items():
        results = {}
        for name, k in backends.items():
            # the slow backend gets a single run
            t, out = best_time(lambda: job(k), 1 if name == "python" else args.repeat)
            results[name] = (t, out)
            print(f"{label:<40s} {name:<9s} {t:10.4f}")
        if len(results) == 2:
            a, b = results["compiled"][1], results["python"][1]
            same = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b)) \
                if isinstance(a, tuple) else np.array_equal(a, b)
            speedup = results["python"][0] / results["compiled"][0]
            print(f"{'':<40s} speedup {speedup:8.1f}x  identical={same}")


if __name__ == "__main__":
    main()
