"""Benchmark the masked top-k kernel: numba scan vs numpy full sort.

Both paths must return bitwise-identical indices; this script checks that
on every timed configuration before reporting. Run with RANKLOOP_NO_NUMBA=1
to confirm the fallback is the only path (nothing to compare then).

    python3 benchmarks/bench_topk.py --n 200000,1000000 --k 50,1000
"""

import argparse
import statistics
import time

import numpy as np

from rankloop import kernels


def parse_int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def time_fn(fn, args, repeats: int) -> float:
    """Median wall time in milliseconds."""

    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        samples.append((time.perf_counter() - start) * 1e3)
    return statistics.median(samples)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", default="200000,1000000", type=parse_int_list,
                    help="comma-separated corpus sizes")
    ap.add_argument("--k", default="50,1000", type=parse_int_list,
                    help="comma-separated selection sizes")
    ap.add_argument("--repeats", default=7, type=int)
    ap.add_argument("--exclude-frac", default=0.05, type=float)
    ap.add_argument("--seed", default=0, type=int)
    args = ap.parse_args()

    if kernels.USING_NUMBA:
        kernels.warmup()
        print("numba path active (set RANKLOOP_NO_NUMBA=1 to disable)")
    else:
        print("numba path disabled; timing the numpy fallback only")
    print(f"{'n':>9} {'k':>6} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")

    rng = np.random.default_rng(args.seed)
    for n in args.n:
        scores = rng.standard_normal(n).astype(np.float32)
        # duplicate some scores so tie-breaking actually runs
        scores[rng.integers(0, n, size=n // 20)] = 0.25
        excluded = rng.random(n) < args.exclude_frac
        tie_rank = rng.permutation(n).astype(np.int64)
        for k in args.k:
            call = (scores, excluded, tie_rank, k)
            numpy_ms = time_fn(kernels._topk_numpy, call, args.repeats)
            if kernels.USING_NUMBA:
                numba_ms = time_fn(kernels._topk_scan_jit, call, args.repeats)
                a = kernels._topk_scan_jit(*call)
                b = kernels._topk_numpy(*call)
                if not np.array_equal(a, b):
                    print(f"MISMATCH at n={n} k={k}: paths disagree")
                    return 1
                print(f"{n:>9} {k:>6} {numpy_ms:>10.3f} {numba_ms:>10.3f}"
                      f" {numpy_ms / numba_ms:>7.1f}x")
            else:
                print(f"{n:>9} {k:>6} {numpy_ms:>10.3f} {'-':>10} {'-':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
