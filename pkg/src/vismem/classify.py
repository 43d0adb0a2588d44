"""Weighted kNN vote aggregation: turn retrieved neighbors into a label.

Four weighting schemes over the first k neighbors:

  plurality   w_i = 1
  distance    w_i = exp(-dist_i)^xi           (xi=0 degenerates to plurality)
  softmax     w_i = exp(sim_i/tau) / sum_j exp(sim_j/tau), sim = 1 - dist
  rank        w_i = 1 / (alpha + i), zero-based rank

Scores are summed per label (optionally scaled by a per-entry reliability
factor) and the argmax label wins; ties break to the smallest label id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import search as search_mod
from .errors import EmptyNeighborSet
from .core import Label
from .store import VisualMemory

SCHEMES = ("plurality", "distance", "softmax", "rank")
CONFIDENCE_POOL = 100  # neighbors used for the plurality-count confidence proxy


@dataclass
class VoteConfig:
    """Voting scheme plus hyperparameters; k is the aggregation depth."""

    scheme: str
    k: int
    alpha: float = 2.0
    tau: float = 0.07
    xi: float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")

    def hyperparameter(self) -> tuple:
        if self.scheme == "rank":
            return ("alpha", self.alpha)
        if self.scheme == "softmax":
            return ("tau", self.tau)
        if self.scheme == "distance":
            return ("xi", self.xi)
        return ("", float("nan"))


@dataclass
class Prediction:
    label: Label
    score_table: dict = field(default_factory=dict)  # label id -> aggregate score
    confidence: int = 0  # plurality count among first min(k, 100) neighbors


def vote_weights(distances, config: VoteConfig) -> np.ndarray:
    """Weight vector for neighbors at ranks 0..len(distances)-1.

    Softmax weights are normalized over exactly the aggregated neighbors;
    the other schemes are per-neighbor functions.
    """
    d = np.asarray(distances, dtype=np.float64)
    if config.scheme == "plurality":
        return np.ones_like(d)
    if config.scheme == "distance":
        return np.exp(-d) ** config.xi
    if config.scheme == "softmax":
        sims = 1.0 - d
        e = np.exp((sims - sims.max()) / config.tau)
        return e / e.sum()
    # rank
    return 1.0 / (config.alpha + np.arange(d.shape[0], dtype=np.float64))


def weight(config: VoteConfig, rank: int, distance: float, neighbor_distances) -> float:
    """Weight of the neighbor at zero-based `rank`, distance `distance`.

    neighbor_distances supplies the normalization pool for softmax; the
    other schemes ignore it.
    """
    if config.scheme == "softmax":
        d = np.asarray(neighbor_distances, dtype=np.float64)
        return float(vote_weights(d, config)[rank])
    if config.scheme == "rank":
        return 1.0 / (config.alpha + rank)
    return float(vote_weights(np.array([distance]), config)[0])


def _plurality_count(label_ids) -> int:
    if len(label_ids) == 0:
        return 0
    _, counts = np.unique(np.asarray(label_ids), return_counts=True)
    return int(counts.max())


def classify(neighbors, config: VoteConfig, reliability=None) -> Prediction:
    """Aggregate the first min(k, available) neighbors into a Prediction.

    reliability, when given, maps entry id -> gamma in (0, 1]; absent
    entries default to 1.0.
    """
    if len(neighbors) == 0:
        raise EmptyNeighborSet("cannot classify from zero neighbors")
    k = min(config.k, len(neighbors))
    used = neighbors[:k] if isinstance(neighbors, list) else list(neighbors)[:k]
    dists = np.array([n.distance for n in used], dtype=np.float64)
    weights = vote_weights(dists, config)
    if reliability is not None:
        weights = weights * np.array([reliability(n.entry_id) for n in used], dtype=np.float64)

    scores: dict = {}
    labels: dict = {}
    for n, w in zip(used, weights):
        scores[n.label.id] = scores.get(n.label.id, 0.0) + float(w)
        labels[n.label.id] = n.label
    best = min(scores, key=lambda lid: (-scores[lid], lid))
    conf_pool = [n.label.id for n in used[: min(k, CONFIDENCE_POOL)]]
    return Prediction(label=labels[best], score_table=scores,
                      confidence=_plurality_count(conf_pool))


@dataclass
class EvalReport:
    """Top-1 accuracy at every k in [1, k_max] from one retrieval pass."""

    scheme: str
    k_max: int
    n_queries: int
    accuracies: np.ndarray  # accuracies[i] = top-1 accuracy at k = i + 1
    config: VoteConfig = None
    exclude_self: bool = False

    def accuracy_at(self, k: int) -> float:
        return float(self.accuracies[k - 1])

    @property
    def best(self) -> tuple:
        """(best accuracy, smallest k achieving it)."""
        i = int(np.argmax(self.accuracies))
        return float(self.accuracies[i]), i + 1

    def records(self) -> list:
        name, value = self.config.hyperparameter() if self.config else ("", float("nan"))
        rows = []
        for i, acc in enumerate(self.accuracies):
            row = {"scheme": self.scheme, "k": i + 1, "accuracy": float(acc)}
            if name:
                row[name] = value
            rows.append(row)
        return rows


def _retrieve_matrices(memory: VisualMemory, queries, k_ret: int, exclude_self: bool,
                       index=None, probes=None, threads=None):
    """Neighbor label-id and distance matrices for a query set.

    Retrieves k_ret (+1 when dropping self-matches) neighbors per query
    and returns (labels (Q, k_ret), dists (Q, k_ret), row indices).
    """
    depth = min(k_ret + (1 if exclude_self else 0), len(memory))
    if index is None:
        rows, dists = search_mod.search_rows(memory, queries.vectors, depth, threads=threads)
        rows = [rows[i] for i in range(rows.shape[0])]
        dists = [dists[i] for i in range(dists.shape[0])]
    else:
        rows, dists = search_mod.ann_search_rows(index, memory, queries.vectors, depth,
                                                 probes=probes, threads=threads)
    nq = len(rows)
    k_eff = min(k_ret, len(memory) - (1 if exclude_self else 0))
    if k_eff < 1:
        raise ValueError("memory too small for self-excluding retrieval")
    out_rows = np.empty((nq, k_eff), dtype=np.int64)
    out_dist = np.empty_like(out_rows, dtype=np.float64)
    for i in range(nq):
        r, d = rows[i], dists[i]
        if exclude_self:
            mask = memory.ids[r] != queries.ids[i]
            r, d = r[mask], d[mask]
        if r.shape[0] < k_eff:
            raise ValueError(
                f"query {i}: only {r.shape[0]} neighbors available, need {k_eff}; "
                "increase probes or reduce k"
            )
        out_rows[i] = r[:k_eff]
        out_dist[i] = d[:k_eff]
    return out_rows, out_dist


def _accuracies_per_k(memory: VisualMemory, rows, dists, true_lids, config: VoteConfig,
                      use_reliability=False) -> np.ndarray:
    """Re-aggregate one retrieval pass at every k in [1, k_max].

    For each query, cumulative per-label scores over the neighbor prefix
    give the prediction at every k; np.unique orders candidate labels by
    id so argmax's first-match rule is the smallest-label-id tie-break.
    Softmax is used unnormalized here: the argmax is scale-invariant.
    """
    nq, k_max = rows.shape
    correct = np.zeros((k_max, nq), dtype=bool)
    for qi in range(nq):
        lids = memory.label_ids[rows[qi]]
        d = dists[qi]
        if config.scheme == "softmax":
            sims = 1.0 - d
            w = np.exp((sims - sims.max()) / config.tau)
        else:
            w = vote_weights(d, config)
        if use_reliability:
            w = w * memory.gammas[rows[qi]]
        uniq, local = np.unique(lids, return_inverse=True)
        cum = np.zeros((k_max, uniq.shape[0]), dtype=np.float64)
        cum[np.arange(k_max), local] = w
        np.cumsum(cum, axis=0, out=cum)
        pred = uniq[np.argmax(cum, axis=1)]
        correct[:, qi] = pred == true_lids[qi]
    return correct.mean(axis=1)


def true_label_ids(memory: VisualMemory, queries) -> np.ndarray:
    """Map query label names onto memory label ids (-1 when unknown)."""
    return np.array(
        [memory.labels.id_of(n) if n in memory.labels else -1 for n in queries.label_names],
        dtype=np.int64,
    )


def evaluate(memory: VisualMemory, queries, config: VoteConfig, exclude_self=False,
             index=None, probes=None, use_reliability=False, threads=None) -> EvalReport:
    """Top-1 accuracy for every k in [1, config.k] in one retrieval pass."""
    rows, dists = _retrieve_matrices(memory, queries, config.k, exclude_self,
                                     index=index, probes=probes, threads=threads)
    accs = _accuracies_per_k(memory, rows, dists, true_label_ids(memory, queries),
                             config, use_reliability=use_reliability)
    return EvalReport(scheme=config.scheme, k_max=rows.shape[1], n_queries=rows.shape[0],
                      accuracies=accs, config=config, exclude_self=exclude_self)


def sweep(memory: VisualMemory, queries, scheme: str, param: str, values,
          k_max: int = 100, exclude_self=False, use_reliability=False, threads=None) -> list:
    """Max-over-k accuracy for each hyperparameter value (one retrieval pass).

    Returns records {scheme, param, value, best_accuracy, best_k}.
    """
    values = list(values)
    if not values:
        raise ValueError("hyperparameter grid is empty")
    base = VoteConfig(scheme=scheme, k=k_max)
    rows, dists = _retrieve_matrices(memory, queries, base.k, exclude_self, threads=threads)
    true_lids = true_label_ids(memory, queries)
    out = []
    for value in values:
        kwargs = {"scheme": scheme, "k": k_max}
        if param:
            kwargs[param] = value
        config = VoteConfig(**kwargs)
        accs = _accuracies_per_k(memory, rows, dists, true_lids, config,
                                 use_reliability=use_reliability)
        i = int(np.argmax(accs))
        out.append({
            "scheme": scheme,
            "param": param,
            "value": value,
            "best_accuracy": float(accs[i]),
            "best_k": i + 1,
        })
    return out
