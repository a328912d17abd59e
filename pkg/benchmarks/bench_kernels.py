"""Compare the numba and numpy paths of the batched determinant kernels.

    python benchmarks/bench_kernels.py [--batch 200000] [--repeat 5]

The first numba call includes compilation and is timed separately.
"""

import argparse
import time

import numpy as np

from slag import _kernels


def best_of(fn, H, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(H)
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"numba enabled: {_kernels.USE_NUMBA}")
    print(f"{'n':>2} {'kernel':>8} {'numpy s':>10} {'numba s':>10} {'speedup':>8} {'max diff':>10}")
    for n in (2, 3, 4, 5):
        A = rng.uniform(-1, 1, (args.batch, n, n))
        H = (A + A.transpose(0, 2, 1)) / 2
        for name, fast, slow in (("esym", _kernels.esym_batch, _kernels.esym_batch_numpy),
                                 ("im_det", _kernels.im_det_batch, _kernels.im_det_batch_numpy)):
            t0 = time.perf_counter()
            fast(H[:2])
            first = time.perf_counter() - t0
            ts = best_of(slow, H, args.repeat)
            tf = best_of(fast, H, args.repeat)
            diff = float(np.max(np.abs(fast(H) - slow(H))))
            print(f"{n:>2} {name:>8} {ts:10.4f} {tf:10.4f} {ts / tf:8.1f} {diff:10.1e}"
                  + (f"   (first call {first:.2f}s)" if n == 2 else ""))


if __name__ == "__main__":
    main()
