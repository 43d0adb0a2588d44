"""Synthetic embedding fixtures: Gaussian clusters on the unit sphere.

Desk-scale stand-in for real encoder features. One seeded call can emit
a memory pack, a matching holdout query pack drawn from the same cluster
means, an optional uniform taxonomy over the classes, and the mask of
entries whose labels were deliberately corrupted.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import packio
from .errors import InvalidSpec

NOISE_MASK_FILE = "noise_mask.json"
PATHS_FILE = "taxonomy_paths.txt"


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return rows / norms


def _sphere_noise(rng, shape, scale: float) -> np.ndarray:
    """Gaussian noise with expected L2 norm `scale` regardless of dims."""
    return (scale / np.sqrt(shape[-1])) * rng.standard_normal(shape)


def _taxonomy_layout(depth: int, fanout: int):
    """Uniform tree: names per level, leaf paths in left-to-right order."""
    paths = [[]]
    for level in range(depth):
        paths = [p + [i] for p in paths for i in range(fanout)]
    named = []
    for path in paths:
        names = []
        for level, branch in enumerate(path):
            idx = 0
            for l, b in enumerate(path[: level + 1]):
                idx = idx * fanout + b
            names.append(f"l{level + 1}n{idx:03d}")
        named.append(names)
    return named


def _hierarchical_means(rng, dims: int, depth: int, fanout: int, branch_spread: float):
    """Cluster means that inherit from their taxonomy parent.

    Top-level subtrees point in independent random directions; each
    deeper level offsets its parent by half the previous level's spread,
    so subtrees stay geometrically coherent.
    """
    dirs = _unit_rows(rng.standard_normal((fanout, dims)))
    offset = branch_spread
    for _ in range(depth - 1):
        children = np.repeat(dirs, fanout, axis=0)
        dirs = _unit_rows(children + _sphere_noise(rng, children.shape, offset))
        offset *= 0.5
    return dirs


def gen_fixture(out_dir, classes: int = 10, per_class: int = 100, dims: int = 64,
                spread: float = 0.05, noise_fraction: float = 0.0,
                taxonomy_depth: int | None = None, taxonomy_fanout: int | None = None,
                seed: int = 0, holdout_per_class: int = 0, queries_out=None,
                branch_spread: float = 0.35, class_separation: float | None = None) -> dict:
    """Generate a memory pack (and optionally a holdout query pack).

    Labels of a seeded round(noise_fraction * N) subset of memory entries
    are reassigned uniformly to a different class; the affected ids are
    recorded in noise_mask.json next to the pack. Holdout queries share
    the cluster means but are never noised.

    class_separation, when set, packs all class means around one shared
    direction at that offset scale (instead of independent random
    directions), producing controllable cluster overlap.
    """
    if classes < 1 or dims < 1:
        raise InvalidSpec("classes and dims must both be >= 1")
    if not (0.0 <= noise_fraction < 1.0):
        raise InvalidSpec(f"noise fraction must be in [0, 1), got {noise_fraction}")
    if spread < 0:
        raise InvalidSpec(f"spread must be >= 0, got {spread}")
    if (taxonomy_depth is None) != (taxonomy_fanout is None):
        raise InvalidSpec("taxonomy depth and fanout must be given together")
    if holdout_per_class and queries_out is None:
        raise InvalidSpec("holdout_per_class requires queries_out")

    rng = np.random.default_rng(seed)
    taxonomy_paths = None
    if taxonomy_depth is not None:
        if taxonomy_depth < 1 or taxonomy_fanout < 1:
            raise InvalidSpec("taxonomy depth and fanout must be >= 1")
        taxonomy_paths = _taxonomy_layout(taxonomy_depth, taxonomy_fanout)
        classes = len(taxonomy_paths)
        means = _hierarchical_means(rng, dims, taxonomy_depth, taxonomy_fanout, branch_spread)
        class_names = [p[-1] for p in taxonomy_paths]
    else:
        if class_separation is not None:
            base = _unit_rows(rng.standard_normal((1, dims)))
            means = _unit_rows(
                base + _sphere_noise(rng, (classes, dims), class_separation)
            )
        else:
            means = _unit_rows(rng.standard_normal((classes, dims)))
        class_names = [f"class_{c:03d}" for c in range(classes)]

    counts = ([int(per_class)] * classes if np.isscalar(per_class)
              else [int(c) for c in per_class])
    if len(counts) != classes:
        raise InvalidSpec(f"per_class list has {len(counts)} entries for {classes} classes")
    if any(c < 1 for c in counts):
        raise InvalidSpec("per_class counts must all be >= 1")
    n = sum(counts)
    vectors = np.repeat(means, counts, axis=0)
    vectors = _unit_rows(vectors + _sphere_noise(rng, (n, dims), spread)).astype(np.float32)
    class_of = np.repeat(np.arange(classes), counts)
    ids = np.arange(n, dtype=np.int64)

    labels = class_of.copy()
    noised = []
    n_noise = int(round(noise_fraction * n))
    if n_noise:
        victims = np.sort(rng.choice(n, size=n_noise, replace=False))
        shift = rng.integers(1, classes, size=n_noise)  # never the original class
        labels[victims] = (labels[victims] + shift) % classes
        noised = [
            {"id": int(i), "true": class_names[class_of[i]], "assigned": class_names[labels[i]]}
            for i in victims
        ]

    out_dir = Path(out_dir)
    pack = packio.PackData(
        dims=dims,
        ids=ids,
        vectors=vectors,
        label_names=[class_names[l] for l in labels],
        taxonomy_paths=[taxonomy_paths[l] if taxonomy_paths else None for l in labels],
        wrong_votes=np.zeros(n, dtype=np.int64),
        gammas=np.ones(n, dtype=np.float64),
    )
    packio.write_pack(out_dir, pack)
    with open(out_dir / NOISE_MASK_FILE, "w", encoding="utf-8") as fh:
        json.dump({"seed": seed, "noise_fraction": noise_fraction, "noised": noised},
                  fh, indent=2, sort_keys=True)
    if taxonomy_paths:
        with open(out_dir / PATHS_FILE, "w", encoding="utf-8") as fh:
            for path in taxonomy_paths:
                fh.write("/".join(path) + "\n")

    result = {
        "pack": str(out_dir),
        "count": n,
        "classes": classes,
        "dims": dims,
        "noised": len(noised),
    }

    if holdout_per_class:
        nq = classes * holdout_per_class
        qvecs = np.repeat(means, holdout_per_class, axis=0)
        qvecs = _unit_rows(qvecs + _sphere_noise(rng, (nq, dims), spread)).astype(np.float32)
        qclass = np.repeat(np.arange(classes), holdout_per_class)
        qpack = packio.PackData(
            dims=dims,
            ids=np.arange(n, n + nq, dtype=np.int64),  # disjoint from memory ids
            vectors=qvecs,
            label_names=[class_names[c] for c in qclass],
            taxonomy_paths=[taxonomy_paths[c] if taxonomy_paths else None for c in qclass],
            wrong_votes=np.zeros(nq, dtype=np.int64),
            gammas=np.ones(nq, dtype=np.float64),
        )
        packio.write_pack(Path(queries_out), qpack)
        result["queries"] = str(queries_out)
        result["query_count"] = nq
    return result
