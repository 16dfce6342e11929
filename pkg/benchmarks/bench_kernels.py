#!/usr/bin/env python3
"""Compare the numba kernels against their numpy / pure-Python fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--n-factor 2000] [--n-keys 70001] [--repeat 3]

The jit kernels are warmed up once first, so compilation time is excluded.
Both paths must produce identical results; the script exits non-zero if not.
"""

import argparse
import random
import sys
import time

import numpy as np

from wuplab import _accel, kernels


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-factor", type=int, default=2000, help="random 64-bit integers to factor")
    ap.add_argument("--n-keys", type=int, default=70_001, help="v6.5 keys to regenerate (one PRNG window)")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _accel.HAVE_NUMBA:
        print("numba is not installed; nothing to compare against", file=sys.stderr)
        return 2

    rng = random.Random(args.seed)
    values = np.array([rng.randrange(1, 1 << 64) for _ in range(args.n_factor)], dtype=np.uint64)
    millis = np.arange(1_400_000_000_000 - args.n_keys // 2, 1_400_000_000_000 - args.n_keys // 2 + args.n_keys,
                       dtype=np.int64)

    # warm-up compiles (or loads from cache)
    kernels.factor_batch_jit(values[:4])
    kernels.v65_keys_jit(millis[:4])

    rows = []
    ok = True

    t_jit, (f_jit, c_jit) = best_of(lambda: kernels.factor_batch_jit(values), args.repeat)
    t_py, (f_py, c_py) = best_of(lambda: kernels.factor_batch_fallback(values), 1)
    same = np.array_equal(c_jit, c_py) and all(
        sorted(f_jit[i, : c_jit[i]].tolist()) == sorted(f_py[i, : c_py[i]].tolist()) for i in range(len(values))
    )
    ok &= same
    rows.append(("factor_batch", args.n_factor, t_jit, t_py, same))

    t_jit, k_jit = best_of(lambda: kernels.v65_keys_jit(millis), args.repeat)
    t_np, k_np = best_of(lambda: kernels.v65_keys_fallback(millis), args.repeat)
    same = np.array_equal(k_jit, k_np)
    ok &= same
    rows.append(("v65_keys", args.n_keys, t_jit, t_np, same))

    print(f"{'kernel':<14}{'n':>8}{'numba (s)':>12}{'fallback (s)':>14}{'speedup':>10}  agree")
    for name, n, tj, tf, same in rows:
        print(f"{name:<14}{n:>8}{tj:>12.4f}{tf:>14.4f}{tf / tj:>9.1f}x  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
