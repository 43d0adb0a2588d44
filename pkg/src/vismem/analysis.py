"""Measurement suite: neighbor reliability, hit rate, calibration,
scaling-law fits, distance statistics, and compositional residual queries.

Everything here is read-only over the memory; each operation returns
plain records so results can be tabulated or re-plotted externally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import search as search_mod
from .classify import VoteConfig, _retrieve_matrices, true_label_ids
from .core import normalize
from .errors import DegenerateFit, DegenerateResidual, EmptyMemory
from .store import VisualMemory


@dataclass
class CurveFit:
    model: str
    coefficients: tuple
    rss: float


@dataclass
class CalibrationTable:
    """Binned accuracy against the plurality-count confidence proxy."""

    bin_width: int
    bin_lows: list
    counts: list
    accuracies: list  # nan for empty bins

    def records(self) -> list:
        return [
            {"bin_low": lo, "bin_high": lo + self.bin_width, "count": c,
             "accuracy": a}
            for lo, c, a in zip(self.bin_lows, self.counts, self.accuracies)
        ]


def _neighbor_hits(memory: VisualMemory, queries, k_max: int, exclude_self=False,
                   threads=None):
    """Boolean (Q, k) matrix: neighbor i's label equals the true label."""
    rows, dists = _retrieve_matrices(memory, queries, k_max, exclude_self, threads=threads)
    true = true_label_ids(memory, queries)
    hits = memory.label_ids[rows] == true[:, None]
    return hits, rows, dists


def reliability_at_k(memory: VisualMemory, queries, k_max: int, exclude_self=False,
                     threads=None):
    """Per-neighbor-index accuracy plus its logarithmic fit.

    accuracy[i] is the fraction of queries whose i-th neighbor carries
    the true label (index 0 = nearest). The fit is a + b*ln(i + 1),
    admitting index 0.
    """
    hits, _, _ = _neighbor_hits(memory, queries, k_max, exclude_self, threads=threads)
    acc = hits.mean(axis=0)
    x = np.log(np.arange(1, acc.shape[0] + 1, dtype=np.float64))
    b, a = np.polyfit(x, acc, 1)
    rss = float(np.sum((a + b * x - acc) ** 2))
    return acc, CurveFit(model="a+b*ln(k+1)", coefficients=(float(a), float(b)), rss=rss)


def hit_rate(memory: VisualMemory, queries, k_max: int, exclude_self=False,
             threads=None) -> np.ndarray:
    """hit_rate[k-1] = P(true label among the first k neighbor labels)."""
    hits, _, _ = _neighbor_hits(memory, queries, k_max, exclude_self, threads=threads)
    return np.maximum.accumulate(hits, axis=1).mean(axis=0)


def calibrate(memory: VisualMemory, queries, bin_width: int = 10, exclude_self=False,
              threads=None) -> CalibrationTable:
    """Accuracy binned by confidence = plurality count among first 100 neighbors.

    The prediction scored per query is plurality voting over the same
    100 neighbors that define the confidence.
    """
    if len(memory) < 100:
        raise EmptyMemory(f"calibration needs >= 100 entries, have {len(memory)}")
    pool = 100
    rows, dists = _retrieve_matrices(memory, queries, pool, exclude_self, threads=threads)
    true = true_label_ids(memory, queries)
    nq = rows.shape[0]
    confidences = np.empty(nq, dtype=np.int64)
    correct = np.empty(nq, dtype=bool)
    for qi in range(nq):
        lids = memory.label_ids[rows[qi]]
        uniq, counts = np.unique(lids, return_counts=True)
        confidences[qi] = counts.max()
        # argmax over np.unique output = plurality winner, smallest label id on ties
        correct[qi] = uniq[int(np.argmax(counts))] == true[qi]

    edges = list(range(0, pool + 1, bin_width))
    if edges[-1] != pool:
        edges.append(pool)
    bin_lows, bin_counts, bin_accs = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (confidences >= lo) & ((confidences < hi) | (hi == pool) & (confidences == pool))
        bin_lows.append(lo)
        bin_counts.append(int(mask.sum()))
        bin_accs.append(float(correct[mask].mean()) if mask.any() else float("nan"))
    assert sum(bin_counts) == nq, "bins must partition the query set"
    return CalibrationTable(bin_width=bin_width, bin_lows=bin_lows,
                            counts=bin_counts, accuracies=bin_accs)


def fit_scaling(points) -> CurveFit:
    """Degree-1 least squares through (log10 memory size, log10 error rate)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError(f"need >= 2 points, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("sizes and error rates must be positive")
    lx = np.log10([x for x, _ in pts])
    ly = np.log10([y for _, y in pts])
    if np.all(lx == lx[0]):
        raise DegenerateFit("all memory sizes equal; slope undetermined")
    m, q = np.polyfit(lx, ly, 1)
    rss = float(np.sum((m * lx + q - ly) ** 2))
    return CurveFit(model="log10(y)=m*log10(x)+q", coefficients=(float(m), float(q)), rss=rss)


def ood_distance_stats(memory: VisualMemory, packs: dict, k: int = 100, threads=None) -> dict:
    """Per-pack distributions of per-query mean/median distance to the
    first k neighbors (k clamped to memory size)."""
    if len(memory) == 0:
        raise EmptyMemory("memory has no entries")
    k = min(k, len(memory))
    out = {}
    for name, queries in packs.items():
        _, dists = search_mod.search_rows(memory, queries.vectors, k, threads=threads)
        per_query_mean = dists.mean(axis=1)
        per_query_median = np.median(dists, axis=1)
        out[name] = {
            "per_query_mean": per_query_mean,
            "per_query_median": per_query_median,
            "mean": float(per_query_mean.mean()),
            "median": float(np.median(per_query_median)),
        }
    return out


def residual_query(memory: VisualMemory, query, k: int, threads=None):
    """Primary search plus a second search with the nearest neighbor removed
    from the query's features.

    The residual vector q - z0 is renormalized before the second search,
    and the subtracted neighbor's id is excluded from its results.
    """
    if len(memory) < 2:
        raise EmptyMemory(f"residual query needs >= 2 entries, have {len(memory)}")
    primary = search_mod.exact_search(memory, query, k, threads=threads)
    nearest = primary[0]
    q64 = np.asarray(query, dtype=np.float32).astype(np.float64).ravel()
    z0 = memory.vectors[memory.row_of(nearest.entry_id)].astype(np.float64)
    r_raw = q64 - z0
    norm = float(np.sqrt(np.dot(r_raw, r_raw)))
    if norm < 1e-6:
        raise DegenerateResidual(
            f"residual norm {norm:.2e} below 1e-6; query coincides with entry {nearest.entry_id}"
        )
    residual_vec = normalize(r_raw)
    depth = min(k + 1, len(memory))
    rows, dists = search_mod.search_rows(memory, residual_vec, depth, threads=threads)
    keep = memory.ids[rows[0]] != nearest.entry_id
    rows = rows[0][keep][:k]
    dists = dists[0][keep][:k]
    residual = search_mod._neighbor_set(memory, rows, dists)
    return primary, residual
