"""Benchmark the compiled kernel extension against the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--size 1024] [--repeats 5]

Measures the three hot per-pixel kernels on a tile-sized workload and prints
median wall times plus the speedup of the compiled path. The pure path is the
behavioural reference; this script only reports speed (equality is enforced by
tests/test_kernels.py).
"""

import argparse
import statistics
import time

import numpy as np

from msrobust.kernels import pure

try:
    from msrobust.kernels import _fast
except ImportError:
    _fast = None


def bench(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=1024, help="tile side in pixels")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _fast is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")

    rng = np.random.default_rng(0)
    n = args.size
    gt = rng.integers(0, 7, (n, n)).astype(np.uint8)
    pred = rng.integers(0, 7, (n, n)).astype(np.uint8)
    u16 = rng.integers(0, 65536, (n, n)).astype(np.uint16)
    lut = rng.integers(0, 256, 65536).astype(np.uint8)
    img = rng.integers(0, 256, (4, n, n)).astype(np.uint8)
    rep = rng.integers(0, 256, (4, n, n)).astype(np.uint8)
    mask = rng.random((n, n)) < 0.3

    cases = [
        ("confusion_tally", lambda m: m.confusion_tally(gt, pred, 7)),
        ("lut_apply_u16", lambda m: m.lut_apply_u16(u16, lut)),
        ("masked_replace", lambda m: m.masked_replace(img, mask, rep)),
    ]

    print(f"tile {n}x{n}, median of {args.repeats} runs")
    print(f"{'kernel':<18} {'pure (ms)':>10} {'cython (ms)':>12} {'speedup':>8}")
    for name, call in cases:
        t_pure = bench(lambda: call(pure), args.repeats) * 1e3
        t_fast = bench(lambda: call(_fast), args.repeats) * 1e3
        print(f"{name:<18} {t_pure:>10.2f} {t_fast:>12.2f} {t_pure / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
