"""Throughput comparison of the compiled and numpy kernel backends.

Times the three hot functions on index-shaped workloads and verifies that the
two backends agree bit-for-bit on every result before reporting. Run with:

    python3 benchmarks/bench_kernels.py [--n 200000] [--dim 256] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from phraseqa.kernels import numpy_backend

try:
    from phraseqa.kernels import _simscan
except ImportError:
    _simscan = None


def _best_of(repeat: int, fn, *args) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="matrix rows")
    ap.add_argument("--dim", type=int, default=256, help="vector dimension")
    ap.add_argument("--gather", type=int, default=20_000, help="gathered row count")
    ap.add_argument("--nnz", type=int, default=400, help="sparse vector nonzeros")
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions, best kept")
    args = ap.parse_args()

    if _simscan is None:
        print("compiled backend not available; nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    mat = rng.standard_normal((args.n, args.dim)).astype(np.float32)
    q = rng.standard_normal(args.dim).astype(np.float32)
    ids = rng.choice(args.n, size=args.gather, replace=False).astype(np.int64)
    ids.sort()

    a_ids = np.sort(rng.choice(1 << 20, size=args.nnz, replace=False)).astype(np.int64)
    b_ids = np.sort(rng.choice(1 << 20, size=args.nnz, replace=False)).astype(np.int64)
    # force some overlap so the intersection loop does real work
    b_ids[: args.nnz // 2] = a_ids[: args.nnz // 2]
    b_ids = np.unique(b_ids)
    a_w = rng.standard_normal(a_ids.shape[0])
    b_w = rng.standard_normal(b_ids.shape[0])

    cases = [
        ("dot_scores", (mat, q)),
        ("gather_dot_scores", (mat, ids, q)),
        ("sparse_dot", (a_ids, a_w, b_ids, b_w)),
    ]

    print(f"rows={args.n} dim={args.dim} gather={args.gather} nnz~{args.nnz} "
          f"(best of {args.repeat})")
    print(f"{'kernel':<18} {'cython':>10} {'numpy':>10} {'speedup':>8}")
    for name, call_args in cases:
        fast = getattr(_simscan, name)
        slow = getattr(numpy_backend, name)
        got, want = fast(*call_args), slow(*call_args)
        if isinstance(got, float):
            agree = got == want
        else:
            agree = got.shape == want.shape and bool(np.all(got == want))
        if not agree:
            print(f"{name}: backends disagree, refusing to time")
            return 1
        t_fast = _best_of(args.repeat, fast, *call_args)
        t_slow = _best_of(args.repeat, slow, *call_args)
        print(f"{name:<18} {t_fast * 1e3:>8.2f}ms {t_slow * 1e3:>8.2f}ms "
              f"{t_slow / t_fast:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
