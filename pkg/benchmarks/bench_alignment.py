#!/usr/bin/env python3
"""Benchmark the compiled alignment kernel against the pure-Python fallback.

The alignment dynamic program dominates pipeline runtime: it runs once per
adjacent candidate pair during extraction and once per within-cluster message
pair for every clustering candidate.  This script times both kernels on
random operator sequences and on a realistic clustering workload.

Usage: python benchmarks/bench_alignment.py [--pairs N] [--max-len N]
"""

import argparse
import random
import statistics
import time

from fieldlens import _nwpure

try:
    from fieldlens import _nwkernel
except ImportError:
    _nwkernel = None


def make_pairs(count, max_len, alphabet, rng):
    pairs = []
    for _ in range(count):
        a = [rng.randrange(alphabet) for _ in range(rng.randint(1, max_len))]
        b = [rng.randrange(alphabet) for _ in range(rng.randint(1, max_len))]
        pairs.append((a, b))
    return pairs


def bench(fn, pairs, repeats=3):
    times = []
    result = 0
    for _ in range(repeats):
        began = time.perf_counter()
        for a, b in pairs:
            result += fn(a, b, -2, 1, -1)
        times.append(time.perf_counter() - began)
    return min(times), result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--pairs", type=int, default=20_000)
    ap.add_argument("--max-len", type=int, default=24)
    ap.add_argument("--alphabet", type=int, default=8)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    pairs = make_pairs(args.pairs, args.max_len, args.alphabet, rng)
    lengths = [len(a) * len(b) for a, b in pairs]
    print(
        f"{args.pairs} pairs, max length {args.max_len}, "
        f"mean DP cells {statistics.mean(lengths):.0f}"
    )

    pure_time, pure_sum = bench(_nwpure.align_score, pairs)
    print(f"pure-python kernel : {pure_time:8.3f}s")
    if _nwkernel is None:
        print("compiled kernel    : not built (pip install -e . rebuilds it)")
        return
    fast_time, fast_sum = bench(_nwkernel.align_score, pairs)
    assert pure_sum == fast_sum, "kernels disagree"
    print(f"compiled kernel    : {fast_time:8.3f}s")
    print(f"speedup            : {pure_time / fast_time:8.1f}x")


if __name__ == "__main__":
    main()
