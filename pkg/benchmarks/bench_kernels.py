"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 5]

Both implementations are timed on the same inputs and checked for
agreement before any numbers are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from poisonlab import _kernels
from poisonlab._kernels import _pure

try:
    from poisonlab._kernels import _native
except ImportError:
    _native = None


def best_of(repeats: int, fn, *args) -> float:
    timings = []
    for _ in range(repeats):
        started = time.perf_counter()
        fn(*args)
        timings.append(time.perf_counter() - started)
    return min(timings)


def bench_power_iteration(repeats: int) -> list[tuple[str, float, float]]:
    rows = []
    rng = np.random.default_rng(0)
    for n, d in ((200, 32), (2_000, 64), (20_000, 128)):
        a = rng.standard_normal((n, d))
        v0 = rng.standard_normal(d)
        args = (a, v0, 1e-12, 500)
        if _native is not None:
            v_native, _, _ = _native.power_iteration(*args)
            v_pure, _, _ = _pure.power_iteration(*args)
            assert abs(abs(float(v_native @ v_pure)) - 1.0) <= 1e-8, "backends disagree"
        pure_time = best_of(repeats, _pure.power_iteration, *args)
        native_time = best_of(repeats, _native.power_iteration, *args) if _native else float("nan")
        rows.append((f"power_iteration {n}x{d}", native_time, pure_time))
    return rows


def bench_nearest_centroids(repeats: int) -> list[tuple[str, float, float]]:
    rows = []
    rng = np.random.default_rng(1)
    for n, k, d in ((2_000, 5, 32), (20_000, 8, 64), (50_000, 16, 32)):
        x = rng.standard_normal((n, d))
        c = rng.standard_normal((k, d))
        if _native is not None:
            labels_native, _ = _native.nearest_centroids(x, c)
            labels_pure, _ = _pure.nearest_centroids(x, c)
            assert np.array_equal(labels_native, labels_pure), "backends disagree"
        pure_time = best_of(repeats, _pure.nearest_centroids, x, c)
        native_time = best_of(repeats, _native.nearest_centroids, x, c) if _native else float("nan")
        rows.append((f"nearest_centroids {n}x{d}, k={k}", native_time, pure_time))
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {_kernels.BACKEND}")
    if _native is None:
        print("compiled extension not available; timing the fallback only\n")
    rows = bench_power_iteration(args.repeats) + bench_nearest_centroids(args.repeats)
    width = max(len(name) for name, _, _ in rows)
    print(f"{'kernel'.ljust(width)}  {'native (s)':>12}  {'numpy (s)':>12}  {'speedup':>8}")
    for name, native_time, pure_time in rows:
        speedup = pure_time / native_time if native_time == native_time else float("nan")
        print(f"{name.ljust(width)}  {native_time:12.6f}  {pure_time:12.6f}  {speedup:7.2f}x")


if __name__ == "__main__":
    main()
