#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy reference backend.

Runs representative resampling and warping workloads through both
implementations, verifies they agree bit-for-bit, and prints a timing table.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from cropforge.buffer import InterpMethod
from cropforge.kernels import _pykernels, axis_taps

try:
    from cropforge.kernels import _cykernels
except ImportError:
    _cykernels = None


def best_of(fn, repeats: int) -> float:
    """Best wall-clock time over `repeats` runs, in seconds."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_resize(backend, plane, w_out, h_out, method):
    idx_h, wts_h = axis_taps(plane.shape[1], w_out, method)
    idx_v, wts_v = axis_taps(plane.shape[0], h_out, method)

    def run():
        return backend.resample_v(backend.resample_h(plane, idx_h, wts_h), idx_v, wts_v)

    return run


def bench_warp(backend, plane):
    h, w = plane.shape
    rng = np.random.default_rng(0)
    mx = np.ascontiguousarray(np.clip(rng.random((h, w)) * w, 0.5, w - 0.5))
    my = np.ascontiguousarray(np.clip(rng.random((h, w)) * h, 0.5, h - 0.5))

    def run():
        return backend.warp_bilinear(plane, mx, my)

    return run


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _cykernels is None:
        raise SystemExit("compiled backend not built; run pip install -e . first")

    rng = np.random.default_rng(42)
    plane_big = rng.random((1365, 2048), dtype=np.float32)
    plane_mid = rng.random((683, 1024), dtype=np.float32)

    workloads = []
    for method in InterpMethod:
        workloads.append(
            (
                f"resize 2048x1365 -> 1024x683 {method.name}",
                bench_resize(_pykernels, plane_big, 1024, 683, method),
                bench_resize(_cykernels, plane_big, 1024, 683, method),
            )
        )
    workloads.append(
        (
            "resize 1024x683 -> 2048x1365 LANCZOS4",
            bench_resize(_pykernels, plane_mid, 2048, 1365, InterpMethod.LANCZOS4),
            bench_resize(_cykernels, plane_mid, 2048, 1365, InterpMethod.LANCZOS4),
        )
    )
    workloads.append(
        (
            "warp 1024x683 bilinear",
            bench_warp(_pykernels, plane_mid),
            bench_warp(_cykernels, plane_mid),
        )
    )

    name_w = max(len(w[0]) for w in workloads)
    print(f"{'workload':<{name_w}}  {'numpy':>9}  {'cython':>9}  {'speedup':>7}")
    print("-" * (name_w + 31))
    for name, py_run, cy_run in workloads:
        py_out, cy_out = py_run(), cy_run()
        if not np.array_equal(py_out.view(np.uint32), cy_out.view(np.uint32)):
            raise SystemExit(f"BACKEND MISMATCH on {name}: outputs are not bit-identical")
        t_py = best_of(py_run, args.repeats)
        t_cy = best_of(cy_run, args.repeats)
        print(
            f"{name:<{name_w}}  {t_py * 1e3:8.2f}ms  {t_cy * 1e3:8.2f}ms  "
            f"{t_py / t_cy:6.2f}x"
        )
    print("\nall workloads bit-identical across backends")


if __name__ == "__main__":
    main()
