"""Hierarchical label prediction over a uniform-depth taxonomy tree.

The tree is the trie of '/'-joined root-to-leaf paths (one per leaf in
the supplied path file) under a synthetic ROOT. Prediction descends
greedily: at each level it picks the child whose example-distance
distribution is least distinguishable from the query's cross-distances,
as judged by the two-sample Kolmogorov-Smirnov p-value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimMismatch, EmptyCandidate, EmptySample, FormatError, NoChildren
from .store import VisualMemory

ROOT_NAME = "ROOT"
PAIR_CAP = 2000  # in-distribution pairwise distances sampled per node beyond this


@dataclass
class KsResult:
    statistic: float
    p_value: float
    n1: int
    n2: int


def _kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, 2*sum (-1)^(r-1) exp(-2 r^2 lam^2)."""
    if lam < 1e-8:
        return 1.0
    total = 0.0
    sign = 1.0
    for r in range(1, 201):
        term = math.exp(-2.0 * (r * lam) ** 2)
        total += sign * term
        if term <= 1e-16 * max(total, 1e-300):
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS test: D = sup |ECDF_a - ECDF_b|, asymptotic p-value.

    p uses the effective size ne = n1*n2/(n1+n2) with the small-sample
    correction lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n1, n2 = a.shape[0], b.shape[0]
    if n1 < 1 or n2 < 1:
        raise EmptySample(f"both samples must be non-empty (got {n1}, {n2})")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / n1
    cdf_b = np.searchsorted(b, grid, side="right") / n2
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    ne = n1 * n2 / (n1 + n2)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d
    return KsResult(statistic=d, p_value=_kolmogorov_sf(lam), n1=n1, n2=n2)


@dataclass
class TaxonomyNode:
    id: int
    name: str
    parent: int | None
    children: list  # child ids in declared (first-appearance) order
    depth: int


class TaxonomyTree:
    """Rooted uniform-depth tree built from root-to-leaf name paths."""

    def __init__(self, paths):
        self.nodes: list = [TaxonomyNode(id=0, name=ROOT_NAME, parent=None,
                                         children=[], depth=0)]
        self._child_by_name: list = [{}]
        depth = None
        for path in paths:
            path = list(path)
            if not path:
                raise FormatError("empty taxonomy path")
            if depth is None:
                depth = len(path)
            elif len(path) != depth:
                raise FormatError(
                    f"taxonomy paths must share one depth: {len(path)} != {depth}"
                )
            cur = 0
            for name in path:
                nxt = self._child_by_name[cur].get(name)
                if nxt is None:
                    nxt = len(self.nodes)
                    self.nodes.append(TaxonomyNode(
                        id=nxt, name=name, parent=cur, children=[],
                        depth=self.nodes[cur].depth + 1,
                    ))
                    self._child_by_name.append({})
                    self.nodes[cur].children.append(nxt)
                    self._child_by_name[cur][name] = nxt
                cur = nxt
        if depth is None:
            raise FormatError("taxonomy has no paths")
        self.leaf_depth = depth

    @classmethod
    def from_file(cls, path) -> "TaxonomyTree":
        """Parse a newline-delimited path file ('/'-joined names per leaf)."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        paths = [line.strip().split("/") for line in lines if line.strip()]
        return cls(paths)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> TaxonomyNode:
        return self.nodes[0]

    def children_of(self, node_id: int) -> list:
        return [self.nodes[c] for c in self.nodes[node_id].children]

    def resolve(self, path) -> int:
        """Leaf node id for a root-to-leaf name path; FormatError on missing edges."""
        cur = 0
        for name in path:
            nxt = self._child_by_name[cur].get(name)
            if nxt is None:
                raise FormatError(f"taxonomy path step {name!r} not under {self.nodes[cur].name!r}")
            cur = nxt
        if self.nodes[cur].depth != self.leaf_depth:
            raise FormatError(f"path {'/'.join(path)} does not reach leaf depth {self.leaf_depth}")
        return cur

    def id_path(self, node_id: int) -> list:
        """Node ids from ROOT down to node_id."""
        out = []
        cur = node_id
        while cur is not None:
            out.append(cur)
            cur = self.nodes[cur].parent
        return out[::-1]

    def name_path(self, node_id: int) -> list:
        return [self.nodes[i].name for i in self.id_path(node_id)[1:]]


class TaxonomyExamples:
    """Memory rows grouped by taxonomy node (subtree union), one generation."""

    def __init__(self, tree: TaxonomyTree, memory: VisualMemory):
        self.tree = tree
        self.generation = memory.generation
        rows_by_node = [[] for _ in range(len(tree))]
        for row, path in enumerate(memory.taxonomy_paths):
            if path is None:
                continue
            leaf = tree.resolve(path)
            for node_id in tree.id_path(leaf):
                rows_by_node[node_id].append(row)
        self.rows_by_node = [np.array(r, dtype=np.int64) for r in rows_by_node]

    def rows(self, node_id: int) -> np.ndarray:
        return self.rows_by_node[node_id]


def _cross_distances(memory: VisualMemory, rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    sims = memory.vectors[rows].astype(np.float64) @ x.astype(np.float64)
    return np.clip(1.0 - sims, 0.0, 2.0)


def _within_distances(memory: VisualMemory, rows: np.ndarray, pair_cap: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Pairwise distances within a node's examples, excluding self-pairs.

    Full pairwise set when it fits in pair_cap, otherwise pair_cap
    seeded-random distinct pairs.
    """
    m = rows.shape[0]
    total = m * (m - 1) // 2
    if total == 0:
        return np.empty(0, dtype=np.float64)
    vecs = memory.vectors[rows].astype(np.float64)
    if total <= pair_cap:
        sims = vecs @ vecs.T
        iu = np.triu_indices(m, k=1)
        return np.clip(1.0 - sims[iu], 0.0, 2.0)
    left = rng.integers(0, m, size=pair_cap)
    right = rng.integers(0, m - 1, size=pair_cap)
    right = np.where(right >= left, right + 1, right)  # skip self-pairs
    sims = np.einsum("ij,ij->i", vecs[left], vecs[right])
    return np.clip(1.0 - sims, 0.0, 2.0)


def hierarchical_predict(x, memory: VisualMemory, tree: TaxonomyTree,
                         examples: TaxonomyExamples | None = None,
                         skip_empty: bool = False, pair_cap: int = PAIR_CAP,
                         seed: int = 0) -> list:
    """Greedy top-down descent; returns node ids ROOT -> leaf.

    At each level the child maximizing the KS p-value between the query's
    cross-distances and the child's within-distances wins; ties keep the
    first-visited child (declared order). Children without examples raise
    EmptyCandidate unless skip_empty, which drops them from the running.
    A child with a single example has no within-distance sample; its
    p-value is taken as 0 so it only wins over an otherwise empty level.
    """
    x = np.asarray(x, dtype=np.float32).ravel()
    if x.shape[0] != memory.dims:
        raise DimMismatch(f"query dims {x.shape[0]} != memory dims {memory.dims}")
    if examples is None or examples.generation != memory.generation:
        examples = TaxonomyExamples(tree, memory)

    path = [tree.root.id]
    cur = tree.root
    while cur.depth < tree.leaf_depth:
        children = tree.children_of(cur.id)
        if not children:
            raise NoChildren(f"node {cur.name!r} has no children at depth {cur.depth}")
        candidates = []
        for child in children:
            if examples.rows(child.id).shape[0] == 0:
                if skip_empty:
                    continue
                raise EmptyCandidate(f"node {child.name!r} has no examples in memory")
            candidates.append(child)
        if not candidates:
            raise EmptyCandidate(f"no child of {cur.name!r} has examples in memory")
        if len(candidates) == 1:
            best = candidates[0]
        else:
            best = None
            best_p = -math.inf
            for child in candidates:
                rows = examples.rows(child.id)
                in_dist = _within_distances(memory, rows, pair_cap,
                                            np.random.default_rng((seed, child.id)))
                if in_dist.shape[0] == 0:
                    p = 0.0
                else:
                    cross = _cross_distances(memory, rows, x)
                    p = ks_two_sample(cross, in_dist).p_value
                if p > best_p:
                    best_p = p
                    best = child
        path.append(best.id)
        cur = best
    return path


def granularity_experiment(memory: VisualMemory, tree: TaxonomyTree, target_leaf_path,
                           exemplar_pool, holdouts, ladder=(0, 1, 5, 10, 25, 50),
                           seed: int = 0, pair_cap: int = PAIR_CAP) -> list:
    """Accuracy per taxonomy level as target-species exemplars accumulate.

    memory must hold exemplars for every non-target leaf; exemplar_pool
    supplies the target species' entries (shuffled once, then steps take
    nested prefixes). holdouts is an (n, dims) array of query vectors
    drawn from the target species. Returns records
    {step, level, level_name, accuracy, majority_baseline}.
    """
    target_leaf = tree.resolve(target_leaf_path)
    true_path = tree.id_path(target_leaf)
    pool = list(exemplar_pool)
    order = np.random.default_rng(seed).permutation(len(pool))
    pool = [pool[i] for i in order]
    holdouts = np.asarray(holdouts, dtype=np.float32)

    records = []
    for step in ladder:
        if step > len(pool):
            raise ValueError(f"ladder step {step} exceeds exemplar pool size {len(pool)}")
        mem = memory.copy()
        if step:
            mem.insert(pool[:step])
        examples = TaxonomyExamples(tree, mem)
        level_hits = np.zeros(tree.leaf_depth, dtype=np.int64)
        for q in holdouts:
            pred = hierarchical_predict(q, mem, tree, examples=examples,
                                        skip_empty=True, pair_cap=pair_cap, seed=seed)
            for level in range(1, tree.leaf_depth + 1):
                level_hits[level - 1] += int(pred[level] == true_path[level])
        for level in range(1, tree.leaf_depth + 1):
            level_nodes = [n for n in tree.nodes if n.depth == level]
            sizes = [(examples.rows(n.id).shape[0], n.id) for n in level_nodes]
            majority = max(sizes, key=lambda t: (t[0], -t[1]))[1]
            records.append({
                "step": int(step),
                "level": level,
                "level_name": tree.nodes[true_path[level]].name,
                "accuracy": float(level_hits[level - 1] / max(len(holdouts), 1)),
                "majority_baseline": 1.0 if majority == true_path[level] else 0.0,
            })
    return records
