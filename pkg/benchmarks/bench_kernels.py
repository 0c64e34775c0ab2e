#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs every paired kernel at a few window sizes and prints per-call times
plus the speedup.  The numba variants are warmed up first so JIT
compilation is excluded from the timings.

    python3 benchmarks/bench_kernels.py --sizes 100 400 --repeat 200
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adformer import kernels
from adformer.attention import distance_matrix, log_distance_matrix
from adformer.rng import XorShift64Star


def _time(fn, args, repeat: int) -> float:
    fn(*args)  # warmup / JIT
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def build_cases(n: int):
    rng = XorShift64Star(0)
    x = rng.normal((n, n))
    y = kernels.IMPLEMENTATIONS["softmax_rows"]["numpy"](x)
    gy = rng.normal((n, n))
    sigma = rng.uniform((n,), 0.3, 4.0)
    dist = distance_matrix(n)
    logdist = log_distance_matrix(n)
    p = kernels.IMPLEMENTATIONS["gaussian_prior"]["numpy"](sigma, dist)
    d_model = 64
    feats = rng.normal((n, d_model))
    gain = rng.uniform((d_model,), 0.5, 2.0)
    bias = rng.normal((d_model,))
    _, xhat, inv_std = kernels.IMPLEMENTATIONS["layernorm"]["numpy"](
        feats, gain, bias, 1e-5
    )
    gfeats = rng.normal((n, d_model))
    flat = rng.normal((n * d_model,))
    adam_bufs = lambda: (
        flat.copy(), rng.normal((n * d_model,)),
        np.zeros(n * d_model), np.zeros(n * d_model),
        1e-4, 0.9, 0.999, 1e-8, 3,
    )
    return {
        "softmax_rows": (x,),
        "softmax_rows_bwd": (y, gy),
        "gaussian_prior": (sigma, dist),
        "gaussian_prior_bwd": (p, dist, sigma, gy),
        "powerlaw_prior": (sigma, logdist),
        "powerlaw_prior_bwd": (p, logdist, gy),
        "layernorm": (feats, gain, bias, 1e-5),
        "layernorm_bwd": (gfeats, xhat, inv_std, gain),
        "adam_update": adam_bufs(),
        "xorshift_fill": (12345, np.empty(n * n)),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 400])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    if not any(v["numba"] for v in kernels.IMPLEMENTATIONS.values()):
        print("numba is not installed; nothing to compare")
        return 1

    print(f"active backend: {kernels.active_backend()}")
    header = f"{'kernel':<20} {'N':>5} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n in args.sizes:
        for name, case in build_cases(n).items():
            impls = kernels.IMPLEMENTATIONS[name]
            t_np = _time(impls["numpy"], case, args.repeat)
            t_nb = _time(impls["numba"], case, args.repeat)
            print(
                f"{name:<20} {n:>5} {t_np * 1e6:>12.1f} {t_nb * 1e6:>12.1f} "
                f"{t_np / t_nb:>7.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
