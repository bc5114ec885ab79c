#!/usr/bin/env python3
"""Measure exact vs moment-approximated COUNT at growing input sizes.

Prints a markdown table of wall-clock seconds and the 0.95 interval each
path reports, so the accuracy cost of the approximation is visible next
to its speedup.  Sizes and the seed are configurable for rerunning on
different hardware.
"""

import argparse
import time

import numpy as np

from pgfdb import CountUda, MomentsUda, confidence_interval


def measure(n: int, rng) -> dict:
    probs = rng.uniform(size=n)

    t0 = time.perf_counter()
    exact = CountUda()
    exact.accumulate_many(probs)
    exact_dist = exact.finalize().to_pgf()
    exact_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    approx = MomentsUda(kind="count")
    approx.accumulate_many(probs)
    approx_dist = approx.finalize()
    approx_s = time.perf_counter() - t0

    return {
        "n": n,
        "exact_s": exact_s,
        "approx_s": approx_s,
        "exact_interval": confidence_interval(exact_dist, 0.95),
        "approx_interval": confidence_interval(approx_dist, 0.95),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument(
        "--sizes",
        type=int,
        nargs="+",
        default=[10_000, 100_000, 1_000_000],
    )
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print("| n | exact (s) | moments (s) | speedup | exact 0.95 interval | moments 0.95 interval |")
    print("|---|-----------|-------------|---------|---------------------|-----------------------|")
    for n in args.sizes:
        row = measure(n, rng)
        lo_e, hi_e = row["exact_interval"]
        lo_a, hi_a = row["approx_interval"]
        print(
            f"| {row['n']:,} | {row['exact_s']:.3f} | {row['approx_s']:.3f} "
            f"| {row['exact_s'] / row['approx_s']:.1f}x "
            f"| [{lo_e:.0f}, {hi_e:.0f}] | [{lo_a:.0f}, {hi_a:.0f}] |"
        )


if __name__ == "__main__":
    main()
