#!/usr/bin/env python3
"""Benchmark the compiled ray-tracing kernels against the pure-numpy fallback.

Times the coarse pass and the refine pass separately on a representative
defocused scene, checks that both backends agree, and prints a speedup table.

Usage: python benchmarks/bench_kernels.py [--repeats 5] [--spp 256] [--workers 1]
"""

import argparse
import time

import numpy as np

import markersim as ms
from markersim import _kernels
from markersim.rendering import Scene, render_coarse, render_linear


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--spp", type=int, default=256)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    try:
        _kernels.get_backend("compiled")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1

    rig = ms.logitech_c270()
    marker = ms.generate_square_marker(50.0)
    scene = Scene(rig, marker, ms.Pose6D(20.0, -10.0, 900.0, 15.0, -20.0, 40.0))

    results = {}
    for backend in ("compiled", "pure"):
        coarse_t = time_call(
            lambda: render_coarse(scene, workers=args.workers, backend=_kernels.get_backend(backend)),
            args.repeats,
        )
        full_t = time_call(
            lambda: render_linear(scene, spp_max=args.spp, workers=args.workers, backend_name=backend),
            args.repeats,
        )
        linear, stats = render_linear(scene, spp_max=args.spp, workers=args.workers, backend_name=backend)
        results[backend] = (coarse_t, full_t, linear, stats)

    diff = np.abs(results["compiled"][2] - results["pure"][2]).max()
    rays = results["compiled"][3]["refined_pixels"] * args.spp + results["compiled"][2].size

    print(f"scene: 640x480, {results['compiled'][3]['refined_pixels']} refined px, "
          f"{args.spp} spp, workers={args.workers}")
    print(f"backend agreement: max |difference| = {diff:.3e}")
    print(f"{'backend':>10} {'coarse [ms]':>12} {'coarse+refine [ms]':>19} {'Mrays/s':>9}")
    for backend in ("compiled", "pure"):
        coarse_t, full_t, _, _ = results[backend]
        print(f"{backend:>10} {coarse_t * 1e3:>12.1f} {full_t * 1e3:>19.1f} "
              f"{rays / full_t / 1e6:>9.1f}")
    speed = results["pure"][1] / results["compiled"][1]
    print(f"speedup (coarse+refine): {speed:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
