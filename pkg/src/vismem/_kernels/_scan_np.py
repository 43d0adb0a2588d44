"""Numpy top-k scan: blocked float64 matmul plus exact tie-aware selection.

Fallback path used when the compiled extension is unavailable (or forced
via VISMEM_BACKEND=numpy). Distances are 1 - dot, accumulated in float64,
clipped to [0, 2]; ties resolve to the smaller row index.

Within a single gemm call, identical rows produce bitwise-identical
products, so exact ties are broken correctly by index. All matmuls go
through the 2-D gemm path (never gemv) to keep values consistent between
single-query and batched calls of the same block shape.
"""

from __future__ import annotations

import numpy as np

DEFAULT_ROW_BLOCK = 65536
DEFAULT_QUERY_BLOCK = 256


def topk_scan(matrix, queries, k, threads=0, row_block=DEFAULT_ROW_BLOCK,
              query_block=DEFAULT_QUERY_BLOCK):
    """Top-k nearest rows of `matrix` for each row of `queries`.

    matrix: float32 (N, d); queries: float32 (Q, d); returns
    (idx int64 (Q, k), dist float64 (Q, k)) sorted ascending by
    (distance, row index). k must satisfy 1 <= k <= N. `threads` is
    accepted for backend-interface parity; BLAS manages its own pool.
    """
    n, _ = matrix.shape
    nq = queries.shape[0]
    k = int(k)
    out_idx = np.empty((nq, k), dtype=np.int64)
    out_dist = np.empty((nq, k), dtype=np.float64)

    for q0 in range(0, nq, query_block):
        qb = queries[q0:q0 + query_block].astype(np.float64)
        qn = qb.shape[0]
        cand_idx = [[] for _ in range(qn)]
        cand_dist = [[] for _ in range(qn)]
        for r0 in range(0, n, row_block):
            blk = matrix[r0:r0 + row_block].astype(np.float64)
            b = blk.shape[0]
            dist = 1.0 - blk @ qb.T  # (b, qn)
            np.clip(dist, 0.0, 2.0, out=dist)
            kk = min(k, b)
            for j in range(qn):
                col = dist[:, j]
                if kk < b:
                    # kth order statistic bounds the true top-k; collect all
                    # rows at or below it so exact ties are never dropped
                    tau = np.partition(col, kk - 1)[kk - 1]
                    sel = np.flatnonzero(col <= tau)
                else:
                    sel = np.arange(b)
                vals = col[sel]
                order = np.argsort(vals, kind="stable")[:kk]  # sel is ascending, stable keeps id order
                cand_idx[j].append(sel[order].astype(np.int64) + r0)
                cand_dist[j].append(vals[order])
        for j in range(qn):
            ci = np.concatenate(cand_idx[j])
            cd = np.concatenate(cand_dist[j])
            order = np.lexsort((ci, cd))[:k]
            out_idx[q0 + j] = ci[order]
            out_dist[q0 + j] = cd[order]
    return out_idx, out_dist
