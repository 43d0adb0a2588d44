import numpy as np
import pytest

from vismem.store import LabelTable, MemoryEntry, QuerySet, VisualMemory


def make_memory(vectors, label_names, ids=None, taxonomy_paths=None) -> VisualMemory:
    """Assemble a VisualMemory directly from arrays (test shortcut)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    vectors = (vectors / np.linalg.norm(vectors, axis=1, keepdims=True)).astype(np.float32)
    n = vectors.shape[0]
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    ids = np.asarray(ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    table = LabelTable(sorted(set(label_names)))
    label_ids = np.array([table.id_of(label_names[i]) for i in order], dtype=np.int64)
    paths = [taxonomy_paths[i] if taxonomy_paths else None for i in order]
    return VisualMemory(
        dims=vectors.shape[1],
        ids=ids[order],
        vectors=vectors[order],
        label_ids=label_ids,
        label_table=table,
        taxonomy_paths=paths,
    )


def make_queries(vectors, label_names, ids=None) -> QuerySet:
    vectors = np.asarray(vectors, dtype=np.float64)
    vectors = (vectors / np.linalg.norm(vectors, axis=1, keepdims=True)).astype(np.float32)
    n = vectors.shape[0]
    if ids is None:
        ids = np.arange(10_000, 10_000 + n, dtype=np.int64)
    return QuerySet(ids=np.asarray(ids, dtype=np.int64), vectors=vectors,
                    label_names=list(label_names))


def cluster_data(rng, classes, per_class, dims, spread, separation=None):
    """Unit-sphere Gaussian clusters; returns (vectors, label_names, means).

    separation, when set, packs class means around one shared direction at
    that offset scale so clusters overlap controllably.
    """
    if separation is None:
        means = rng.standard_normal((classes, dims))
    else:
        base = rng.standard_normal(dims)
        base /= np.linalg.norm(base)
        means = base + (separation / np.sqrt(dims)) * rng.standard_normal((classes, dims))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    pts = np.repeat(means, per_class, axis=0)
    pts = pts + (spread / np.sqrt(dims)) * rng.standard_normal(pts.shape)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    names = [f"c{c:02d}" for c in np.repeat(np.arange(classes), per_class)]
    return pts, names, means


@pytest.fixture
def small_memory():
    rng = np.random.default_rng(5)
    pts, names, _ = cluster_data(rng, classes=4, per_class=25, dims=16, spread=0.2)
    return make_memory(pts, names)


@pytest.fixture
def entries_factory():
    def factory(n, dims, start_id=0, label="new", seed=0):
        rng = np.random.default_rng(seed)
        out = []
        for i in range(n):
            v = rng.standard_normal(dims)
            out.append(MemoryEntry(id=start_id + i, vector=v, label_name=label))
        return out
    return factory
