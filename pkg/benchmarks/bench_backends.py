"""Benchmark the numba kernels against the pure-numpy fallbacks.

Runs each hot kernel on a realistic workload with both backends (imported
directly, bypassing the SURVALLOC_BACKEND flag) and prints wall times plus
the speedup. Numba timings exclude the first (compilation) call.

Usage: python3 benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from survalloc.dapro import _step_orders
from survalloc.kernels import _numba as knb
from survalloc.kernels import _numpy as knp


def make_workloads(rng):
    n_cal, t_max, grid = 2000, 50, 560
    cdf = np.sort(rng.uniform(0, 1, size=(n_cal, t_max)), axis=1)
    taus = np.sort(rng.uniform(0.001, 0.56, grid))
    curves = knp.quantile_curves(cdf, taus, t_max)
    t_tilde = rng.integers(0, t_max, n_cal)
    censor = rng.integers(0, t_max + 1, n_cal)
    weight = rng.uniform(1.0, 3.0, n_cal)
    hazards = rng.uniform(0.0, 0.3, size=(n_cal, t_max))
    priors = rng.integers(5, t_max + 1, n_cal)

    n1 = 100
    lengths = rng.integers(1, t_max + 1, n1).astype(np.int64)
    t_solve = int(lengths.max())
    scores = rng.normal(size=(n1, t_solve))
    order = _step_orders(scores, lengths, t_solve)
    y = rng.normal(size=3000)
    w = rng.uniform(0.5, 2.0, 3000)

    def bench_bcd(k):
        logp = np.full((n1, t_solve), np.log(0.6))
        return k.bcd_inner(logp, lengths, *order, 0.1, 15.0, 10, 1e-9, np.log(1e-6))

    return {
        "pava_nondecreasing (n=3000)": lambda k: k.pava_nondecreasing(y, w),
        "quantile_curves (2000x50 -> 560)": lambda k: k.quantile_curves(cdf, taus, t_max),
        "miscoverage_curve (2000x560)": lambda k: k.miscoverage_curve(
            curves, t_tilde, censor, weight, False, t_max),
        "expected_cost_matrix (2000x50)": lambda k: k.expected_cost_matrix(hazards, priors),
        "remaining_quantile_scores (2000x50)": lambda k: k.remaining_quantile_scores(
            hazards, 0.1),
        "bcd_inner (100x50, 10 passes)": bench_bcd,
    }


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    workloads = make_workloads(np.random.default_rng(0))
    print(f"{'kernel':38s} {'numba':>10s} {'numpy':>10s} {'speedup':>9s}")
    for name, fn in workloads.items():
        fn(knb)  # compile
        t_nb = timeit(lambda: fn(knb), args.repeats)
        t_np = timeit(lambda: fn(knp), args.repeats)
        print(f"{name:38s} {t_nb * 1e3:9.2f}ms {t_np * 1e3:9.2f}ms {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
