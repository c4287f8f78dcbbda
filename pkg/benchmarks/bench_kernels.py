"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--scale N] [--repeat R]

Each kernel runs on identical inputs in both backends; the outputs are
compared before any timing is reported.
"""

import argparse
import sys
import time

import numpy as np

from ironclad import kernels
from ironclad.rng import Xoshiro256


def _state(seed):
    return np.array(Xoshiro256(seed).state(), dtype=np.uint64)


def bench_fill(kern, n):
    out = np.empty(n, np.uint8)
    kern.fill_symbols(_state(1), out, 0.25, 0.5)
    return out


_SYMBOLS = {}


def bench_scan(kern, n):
    # symbols are generated once, outside the timed region
    if n not in _SYMBOLS:
        _SYMBOLS[n] = bench_fill(kernels.get_backend("cython"), n)
    sym = _SYMBOLS[n]
    scan = np.zeros(8, np.int64)
    counts = np.zeros(8, np.int64)
    kern.alpha_scan(sym, 2, scan, counts)
    return counts


def bench_walk(kern, n):
    hist = np.zeros(10_001, np.int64)
    kern.walk_batch(_state(3), n, np.array([0.6 * 0.95, 0.6 * 0.95 + 0.392, 0.6 + 0.392]), 100.0, 2.0, 10_000, hist)
    return hist


CASES = (
    ("fill_symbols", bench_fill, 200_000),
    ("alpha_scan", bench_scan, 200_000),
    ("walk_batch", bench_walk, 20_000),
)


def best_time(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t)
    return best, result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiply every problem size")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels are not built; run `pip install --no-build-isolation -e .` first", file=sys.stderr)
        return 1
    py = kernels.get_backend("python")
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':<14}{'size':>10}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, fn, size in CASES:
        n = max(1, int(size * args.scale))
        tp, rp = best_time(lambda: fn(py, n), args.repeat)
        tc, rc = best_time(lambda: fn(cy, n), args.repeat)
        if not np.array_equal(rp, rc):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 2
        print(f"{name:<14}{n:>10}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.0f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
