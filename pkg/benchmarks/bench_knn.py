"""Benchmark the kNN kernel backends against each other.

Times knn_label_batch on synthetic 15-channel flux data for every available
backend (compiled Cython and the numpy fallback), checks that they agree
label-for-label, and prints a throughput table. Sizes default to the scales
the pipeline actually hits (hundreds of training episodes, windows of a few
hundred queries) plus a couple of larger points to show the trend.

Usage:
    python3 benchmarks/bench_knn.py [--k 10] [--repeats 5] [--threads N]
"""

import argparse
import time

import numpy as np

from layerkit._kernels import BACKEND, available_backends, knn_label_batch

SIZES = [
    # (n_train, n_queries)
    (1_000, 160),
    (5_000, 160),
    (18_000, 160),
    (18_000, 2_000),
    (50_000, 2_000),
]


def bench_one(points, labels, queries, k, backend, threads, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = knn_label_batch(
            points, labels, queries, k, num_threads=threads, backend=backend
        )
        best = min(best, time.perf_counter() - t0)
    return out, best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--threads", type=int, default=None,
                    help="thread cap for the compiled kernel (default: env)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)} (default: {BACKEND})")
    print(f"k={args.k}, repeats={args.repeats} (best-of), 15 channels\n")
    header = f"{'n_train':>8} {'n_query':>8}"
    for b in backends:
        header += f" {b + ' (ms)':>14}"
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)

    rng = np.random.default_rng(args.seed)
    for n_train, n_query in SIZES:
        points = rng.normal(size=(n_train, 15))
        labels = rng.integers(0, 4, size=n_train, dtype=np.int32)
        queries = rng.normal(size=(n_query, 15))
        row = f"{n_train:>8} {n_query:>8}"
        times = []
        outputs = []
        for b in backends:
            out, secs = bench_one(
                points, labels, queries, args.k, b, args.threads, args.repeats
            )
            outputs.append(out)
            times.append(secs)
            row += f" {secs * 1e3:>14.2f}"
        if len(outputs) == 2:
            if not np.array_equal(outputs[0], outputs[1]):
                raise SystemExit(
                    f"backend disagreement at n={n_train}, m={n_query}"
                )
            row += f" {times[1] / times[0]:>8.2f}x"
        print(row)

    if len(backends) == 2:
        print("\nagreement: all label batches identical across backends")


if __name__ == "__main__":
    main()
