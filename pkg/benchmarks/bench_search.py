#!/usr/bin/env python3
"""Benchmark the top-k scan backends (compiled vs numpy) and the ANN path.

Usage:
    python benchmarks/bench_search.py [--sizes 10000,100000] [--dims 64]
                                      [--queries 256] [--k 100] [--repeats 3]

Results are wall-clock medians; both backends return identical neighbor
ids (asserted), so the comparison is purely about throughput.
"""

import argparse
import statistics
import time

import numpy as np

from vismem import _kernels, build_index
from vismem.search import ann_search_rows, search_rows
from vismem.store import LabelTable, VisualMemory


def make_memory(n, dims, seed):
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((n, dims))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    table = LabelTable(["x"])
    return VisualMemory(dims=dims, ids=np.arange(n, dtype=np.int64),
                        vectors=vecs.astype(np.float32),
                        label_ids=np.zeros(n, dtype=np.int64), label_table=table)


def timed(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="10000,100000")
    ap.add_argument("--dims", type=int, default=64)
    ap.add_argument("--queries", type=int, default=256)
    ap.add_argument("--k", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    backends = _kernels.available_backends()
    print(f"backends available: {backends} (default: {_kernels.backend_name()})")
    print(f"dims={args.dims} queries={args.queries} k={args.k} repeats={args.repeats}")
    header = f"{'rows':>10}  " + "  ".join(f"{b:>12}" for b in backends) + f"  {'ann(default)':>14}"
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(1)
    for n in sizes:
        memory = make_memory(n, args.dims, seed=7)
        queries = rng.standard_normal((args.queries, args.dims))
        queries = (queries / np.linalg.norm(queries, axis=1, keepdims=True)).astype(np.float32)
        k = min(args.k, n)

        results = {}
        times = {}
        for backend in backends:
            times[backend], results[backend] = timed(
                lambda b=backend: _kernels.topk_scan(memory.vectors, queries, k, backend=b),
                args.repeats)
        first = backends[0]
        for other in backends[1:]:
            assert (results[first][0] == results[other][0]).all(), "backends disagree"

        index = build_index(memory, seed=3)
        ann_time, _ = timed(lambda: ann_search_rows(index, memory, queries, k), args.repeats)

        row = f"{n:>10}  " + "  ".join(f"{times[b]:>11.3f}s" for b in backends)
        row += f"  {ann_time:>13.3f}s"
        print(row)

    print("\nexact scan via search_rows (active backend), single pass:")
    m = make_memory(sizes[-1], args.dims, seed=7)
    t, _ = timed(lambda: search_rows(m, queries, min(args.k, sizes[-1])), args.repeats)
    print(f"  {sizes[-1]} rows x {args.queries} queries: {t:.3f}s")


if __name__ == "__main__":
    main()
