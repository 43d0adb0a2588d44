"""Memory pruning: estimate per-entry sample quality, then drop or downweight.

Quality is estimated by querying the memory against itself (self-match
discarded): whenever a query is misclassified, every retrieved neighbor
whose label differs from the query's true label gets its wrong-vote
count v bumped. Hard pruning removes entries with v >= threshold; soft
pruning keeps them but scales their vote weight by gamma = d / (c + v).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import search as search_mod
from .classify import VoteConfig, vote_weights
from .errors import EmptyMemory, FormatError, InvalidThreshold, StaleReport
from .store import VisualMemory

DEFAULT_K_RETRIEVE = 100
DEFAULT_C = 1.0
DEFAULT_D = 1.75
DEFAULT_THRESHOLD = 128


@dataclass
class ReliabilityReport:
    """Per-entry wrong-vote counts, keyed to one memory generation."""

    ids: np.ndarray            # int64, ascending (memory order at estimation time)
    wrong_votes: np.ndarray    # int64, aligned with ids
    params: dict = field(default_factory=dict)
    generation: int = 0
    ids_checksum: int = 0

    def v_of(self, entry_id: int) -> int:
        pos = int(np.searchsorted(self.ids, entry_id))
        if pos >= self.ids.shape[0] or self.ids[pos] != entry_id:
            raise KeyError(entry_id)
        return int(self.wrong_votes[pos])

    def check_against(self, memory: VisualMemory) -> None:
        if self.generation != memory.generation or self.ids_checksum != memory.ids_checksum():
            raise StaleReport(
                f"report computed for generation {self.generation}, "
                f"memory is at {memory.generation}"
            )


def reliability_factor(v: int, c: float = DEFAULT_C, d: float = DEFAULT_D) -> float:
    """gamma = d/(c + v) for v >= 1; entries with v = 0 keep gamma = 1."""
    if v == 0:
        return 1.0
    return min(1.0, d / (c + v))


CHARGE_RULES = ("both", "true_only", "predicted_only")


def estimate_reliability(memory: VisualMemory, config: VoteConfig | None = None,
                         k_retrieve: int = DEFAULT_K_RETRIEVE, charge_rule: str = "both",
                         threads=None) -> ReliabilityReport:
    """Self-query every entry and count harmful appearances.

    One retrieval per entry: fetch k_retrieve + 1 neighbors, drop the
    self-match by id, classify the rest. On a wrong prediction, retrieved
    neighbors are charged one wrong vote according to charge_rule:

      both            label contradicts the query's label AND the decided
                      label (default: consensus voters are spared, so a
                      mislabeled query cannot indict its whole cluster)
      true_only       label differs from the query's label
      predicted_only  label equals the (wrong) decided label
    """
    n = len(memory)
    if n == 0:
        raise EmptyMemory("memory has no entries")
    if k_retrieve + 1 > n:
        raise ValueError(f"k_retrieve + 1 = {k_retrieve + 1} exceeds memory size {n}")
    if charge_rule not in CHARGE_RULES:
        raise ValueError(f"charge_rule must be one of {CHARGE_RULES}, got {charge_rule!r}")
    if config is None:
        config = VoteConfig(scheme="rank", k=k_retrieve)

    votes = np.zeros(n, dtype=np.int64)
    rows_all, dists_all = search_mod.search_rows(memory, memory.vectors, k_retrieve + 1,
                                                 threads=threads)
    for q in range(n):
        rows = rows_all[q]
        dists = dists_all[q]
        self_pos = np.flatnonzero(rows == q)
        drop = self_pos[0] if self_pos.size else rows.shape[0] - 1
        keep = np.ones(rows.shape[0], dtype=bool)
        keep[drop] = False
        rows = rows[keep][:k_retrieve]
        dists = dists[keep][:k_retrieve]
        assert not np.any(rows == q), "entry must never vote on its own query"

        lids = memory.label_ids[rows]
        w = vote_weights(dists, config)
        uniq, local = np.unique(lids, return_inverse=True)
        scores = np.bincount(local, weights=w)
        pred = uniq[int(np.argmax(scores))]
        true = memory.label_ids[q]
        if pred != true:
            if charge_rule == "both":
                charged = (lids != true) & (lids != pred)
            elif charge_rule == "true_only":
                charged = lids != true
            else:
                charged = lids == pred
            votes[rows[charged]] += 1

    return ReliabilityReport(
        ids=memory.ids.copy(),
        wrong_votes=votes,
        params={
            "k_retrieve": k_retrieve,
            "scheme": config.scheme,
            "k": config.k,
            "alpha": config.alpha,
            "tau": config.tau,
            "xi": config.xi,
            "charge_rule": charge_rule,
            "c": DEFAULT_C,
            "d": DEFAULT_D,
            "threshold": DEFAULT_THRESHOLD,
        },
        generation=memory.generation,
        ids_checksum=memory.ids_checksum(),
    )


def hard_prune(memory: VisualMemory, report: ReliabilityReport,
               threshold: int = DEFAULT_THRESHOLD) -> None:
    """Remove entries with v >= threshold (full unlearning semantics)."""
    if threshold < 1:
        raise InvalidThreshold(f"threshold must be >= 1, got {threshold}")
    report.check_against(memory)
    doomed = report.ids[report.wrong_votes >= threshold]
    if doomed.size:
        memory.remove(doomed.tolist())


def soft_prune(memory: VisualMemory, report: ReliabilityReport,
               c: float = DEFAULT_C, d: float = DEFAULT_D) -> None:
    """Set per-entry reliability gamma = d/(c+v) (1.0 when v = 0) in place."""
    if d <= 0 or c < 0:
        raise ValueError(f"need d > 0 and c >= 0, got c={c}, d={d}")
    report.check_against(memory)
    v = report.wrong_votes
    gammas = np.where(v == 0, 1.0, np.minimum(1.0, d / (c + v)))
    memory.gammas[:] = gammas
    memory.wrong_votes[:] = v


def compare_pruning(memory: VisualMemory, queries, schemes=None, k_max: int = 100,
                    threshold: int = DEFAULT_THRESHOLD, c: float = DEFAULT_C,
                    d: float = DEFAULT_D, k_retrieve: int = DEFAULT_K_RETRIEVE,
                    estimate_config: VoteConfig | None = None, exclude_self=False,
                    threads=None) -> list:
    """Max-over-k accuracy for {none, hard, soft} pruning x voting scheme.

    Returns records {pruning, scheme, best_accuracy, best_k}; accuracy is
    maximized over k in [1, k_max] so differences are attributable to
    pruning rather than to a choice of k.
    """
    from .classify import evaluate

    if schemes is None:
        schemes = ("plurality", "distance", "softmax", "rank")
    k_max = min(k_max, len(memory) - (1 if exclude_self else 0))
    report = estimate_reliability(memory, config=estimate_config,
                                  k_retrieve=min(k_retrieve, len(memory) - 1),
                                  threads=threads)
    mem_hard = memory.copy()
    hard_prune(mem_hard, report, threshold=threshold)
    mem_soft = memory.copy()
    soft_prune(mem_soft, report, c=c, d=d)

    variants = (
        ("none", memory, False),
        ("hard", mem_hard, False),
        ("soft", mem_soft, True),
    )
    rows = []
    for name, mem, use_rel in variants:
        for scheme in schemes:
            config = VoteConfig(scheme=scheme, k=min(k_max, len(mem)))
            rep = evaluate(mem, queries, config, exclude_self=exclude_self,
                           use_reliability=use_rel, threads=threads)
            acc, best_k = rep.best
            rows.append({"pruning": name, "scheme": scheme,
                         "best_accuracy": acc, "best_k": best_k})
    return rows


# -- persistence ---------------------------------------------------------

def save_report(report: ReliabilityReport, path) -> None:
    """reliability.jsonl: one parameters header line, then {id, v} rows."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "params": report.params,
            "generation": report.generation,
            "ids_checksum": report.ids_checksum,
            "count": int(report.ids.shape[0]),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(report.ids.shape[0]):
            fh.write(json.dumps({"id": int(report.ids[i]), "v": int(report.wrong_votes[i])}) + "\n")


def load_report(path) -> ReliabilityReport:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid header ({exc})") from exc
        if "params" not in header or "count" not in header:
            raise FormatError(f"{path}: header missing params/count")
        ids = []
        votes = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ids.append(int(rec["id"]))
            votes.append(int(rec["v"]))
    if len(ids) != int(header["count"]):
        raise FormatError(f"{path}: {len(ids)} rows but header says {header['count']}")
    return ReliabilityReport(
        ids=np.array(ids, dtype=np.int64),
        wrong_votes=np.array(votes, dtype=np.int64),
        params=header["params"],
        generation=int(header.get("generation", 0)),
        ids_checksum=int(header.get("ids_checksum", 0)),
    )
