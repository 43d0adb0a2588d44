"""Nearest-neighbor retrieval: exact blocked scan and a partitioned index.

The exact path scores every memory row (one matrix product per query
block); the approximate path is inverted-file style: coarse spherical
k-means centroids, exact re-scoring inside the probed partitions. Both
share the tie rule (distance, then entry id, ascending) and the same
scan kernel, so probing every partition reproduces the exact result.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import Label
from .errors import DimMismatch, EmptyMemory, FormatError, StaleIndex
from .store import VisualMemory

KMEANS_ITERATIONS = 25
INDEX_MAGIC = b"VIDX"
INDEX_VERSION = 1


@dataclass(frozen=True)
class Neighbor:
    entry_id: int
    label: Label
    distance: float
    rank: int


class NeighborSet:
    """Distance-ordered retrieval result for one query."""

    def __init__(self, items, query_id=None):
        self.items = list(items)
        self.query_id = query_id
        assert all(n.rank == i for i, n in enumerate(self.items)), "ranks must be 0..k-1"
        assert all(
            self.items[i].distance <= self.items[i + 1].distance
            for i in range(len(self.items) - 1)
        ), "distances must be non-decreasing in rank"

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    @property
    def entry_ids(self):
        return [n.entry_id for n in self.items]

    @property
    def distances(self):
        return np.array([n.distance for n in self.items], dtype=np.float64)


def _as_query_matrix(memory: VisualMemory, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float32)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != memory.dims:
        raise DimMismatch(f"query dims {q.shape[1]} != memory dims {memory.dims}")
    return np.ascontiguousarray(q)


def _neighbor_set(memory: VisualMemory, rows, dists, query_id=None) -> NeighborSet:
    items = [
        Neighbor(
            entry_id=int(memory.ids[r]),
            label=memory.label_of_row(int(r)),
            distance=float(d),
            rank=i,
        )
        for i, (r, d) in enumerate(zip(rows, dists))
    ]
    return NeighborSet(items, query_id=query_id)


def search_rows(memory: VisualMemory, queries, k: int, threads=None):
    """Batched scan over the whole memory; returns (row indices, distances).

    Internal building block: rows are positions in the memory's id-sorted
    arrays, so the kernel's row-index tie rule is the entry-id tie rule.
    """
    if len(memory) == 0:
        raise EmptyMemory("memory has no entries")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    k = min(k, len(memory))
    q = _as_query_matrix(memory, queries)
    return _kernels.topk_scan(memory.vectors, q, k, threads=threads)


def exact_search(memory: VisualMemory, query, k: int, query_id=None, threads=None) -> NeighborSet:
    """The k entries minimizing cosine distance; ties broken by ascending id."""
    rows, dists = search_rows(memory, query, k, threads=threads)
    return _neighbor_set(memory, rows[0], dists[0], query_id=query_id)


class AnnIndex:
    """Coarse k-means partitioning over one memory generation."""

    def __init__(self, centroids, members, seed, generation, ids_checksum, dims):
        self.centroids = np.ascontiguousarray(centroids, dtype=np.float32)
        self.members = [np.asarray(m, dtype=np.int64) for m in members]
        self.seed = int(seed)
        self.generation = int(generation)
        self.ids_checksum = int(ids_checksum)
        self.dims = int(dims)

    @property
    def partitions(self) -> int:
        return int(self.centroids.shape[0])

    def default_probes(self) -> int:
        return max(1, math.ceil(0.1 * self.partitions))


def default_partitions(count: int) -> int:
    return max(1, math.ceil(math.sqrt(count)))


def build_index(memory: VisualMemory, partitions=None, seed: int = 0, threads=None) -> AnnIndex:
    """Partition the memory with seeded spherical k-means (fixed 25 iterations)."""
    n = len(memory)
    if n == 0:
        raise EmptyMemory("cannot index an empty memory")
    p = int(partitions) if partitions else default_partitions(n)
    p = min(p, n)
    rng = np.random.default_rng(seed)
    init_rows = np.sort(rng.choice(n, size=p, replace=False))
    centroids = memory.vectors[init_rows].astype(np.float32)

    assign = None
    for _ in range(KMEANS_ITERATIONS):
        rows, _ = _kernels.topk_scan(centroids, memory.vectors, 1, threads=threads)
        assign = rows[:, 0]
        order = np.argsort(assign, kind="stable")
        sorted_assign = assign[order]
        boundaries = np.searchsorted(sorted_assign, np.arange(p + 1))
        sums = np.add.reduceat(
            memory.vectors[order].astype(np.float64),
            boundaries[:-1].clip(max=max(n - 1, 0)),
            axis=0,
        )
        counts = np.diff(boundaries)
        new_centroids = centroids.astype(np.float64)
        occupied = counts > 0
        norms = np.linalg.norm(sums[occupied], axis=1)
        nonzero = norms > 1e-12
        upd = np.flatnonzero(occupied)[nonzero]
        new_centroids[upd] = sums[occupied][nonzero] / norms[nonzero][:, None]
        centroids = new_centroids.astype(np.float32)

    rows, _ = _kernels.topk_scan(centroids, memory.vectors, 1, threads=threads)
    assign = rows[:, 0]
    members = [np.flatnonzero(assign == c).astype(np.int64) for c in range(p)]
    return AnnIndex(
        centroids=centroids,
        members=members,
        seed=seed,
        generation=memory.generation,
        ids_checksum=memory.ids_checksum(),
        dims=memory.dims,
    )


def ann_search_rows(index: AnnIndex, memory: VisualMemory, queries, k: int,
                    probes=None, threads=None):
    """Probe the nearest partitions and exact-score their members.

    Returns (row indices, distances) with the same tie rule as
    search_rows; probing all partitions reproduces the exact scan.
    """
    if len(memory) == 0:
        raise EmptyMemory("memory has no entries")
    if index.generation != memory.generation or index.ids_checksum != memory.ids_checksum():
        raise StaleIndex(
            f"index built for generation {index.generation}, memory is at {memory.generation}"
        )
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = _as_query_matrix(memory, queries)
    p = index.partitions
    probes = index.default_probes() if probes is None else max(1, min(int(probes), p))

    cent_rows, _ = _kernels.topk_scan(index.centroids, q, probes, threads=threads)
    nq = q.shape[0]
    out_idx = []
    out_dist = []
    for j in range(nq):
        cand = np.sort(np.concatenate([index.members[c] for c in cent_rows[j]]))
        if cand.size == 0:
            raise EmptyMemory("probed partitions are empty; increase probes")
        kk = min(k, cand.size)
        local, dists = _kernels.topk_scan(
            np.ascontiguousarray(memory.vectors[cand]), q[j:j + 1], kk, threads=threads
        )
        out_idx.append(cand[local[0]])
        out_dist.append(dists[0])
    return out_idx, out_dist


def ann_search(index: AnnIndex, memory: VisualMemory, query, k: int,
               probes=None, query_id=None, threads=None) -> NeighborSet:
    rows, dists = ann_search_rows(index, memory, query, k, probes=probes, threads=threads)
    return _neighbor_set(memory, rows[0], dists[0], query_id=query_id)


# -- persistence ---------------------------------------------------------

def save_index(index: AnnIndex, path) -> None:
    """Persist as index.bin: header, centroids, then per-partition member rows."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<IIIQqQ", INDEX_VERSION, index.dims, index.partitions,
                             index.generation, index.seed, index.ids_checksum & 0xFFFFFFFFFFFFFFFF))
        fh.write(index.centroids.astype("<f4").tobytes())
        for m in index.members:
            fh.write(struct.pack("<Q", m.size))
            fh.write(m.astype("<i8").tobytes())


def load_index(path, memory: VisualMemory) -> AnnIndex:
    """Load index.bin and verify it matches this memory's content."""
    path = Path(path)
    raw = path.read_bytes()
    head = struct.Struct("<4sIIIQqQ")
    if len(raw) < head.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, dims, p, generation, seed, checksum = head.unpack_from(raw, 0)
    if magic != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version}")
    off = head.size
    cent_bytes = 4 * dims * p
    if len(raw) < off + cent_bytes:
        raise FormatError(f"{path}: truncated centroids at offset {len(raw)}")
    centroids = np.frombuffer(raw, dtype="<f4", offset=off, count=dims * p).reshape(p, dims)
    off += cent_bytes
    members = []
    for _ in range(p):
        if len(raw) < off + 8:
            raise FormatError(f"{path}: truncated member list at offset {off}")
        (size,) = struct.unpack_from("<Q", raw, off)
        off += 8
        if len(raw) < off + 8 * size:
            raise FormatError(f"{path}: truncated member rows at offset {off}")
        members.append(np.frombuffer(raw, dtype="<i8", offset=off, count=size).copy())
        off += 8 * size
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes after offset {off}")
    index = AnnIndex(
        centroids=centroids.copy(),
        members=members,
        seed=seed,
        generation=generation,
        ids_checksum=checksum,
        dims=dims,
    )
    if index.ids_checksum != memory.ids_checksum() or index.dims != memory.dims:
        raise StaleIndex(f"{path}: index does not match this memory's contents")
    index.generation = memory.generation
    return index
