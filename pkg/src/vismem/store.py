"""The visual memory itself: build, persist, insert, delete, subsample.

Entries live in columnar arrays kept sorted by ascending entry id, which
makes the kernels' row-index tie rule coincide with the id tie rule and
keeps removal exactly equivalent to a rebuild without the removed rows.

Label ids are assigned in lexicographic name order and the table is
append-only: newly inserted labels get ids after all existing ones, and
labels whose last entry is removed stay registered. Name-sorted
assignment means score ties broken by "smallest label id" resolve to the
same label name in an edited memory and in a from-scratch rebuild.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import packio
from .core import Label, ensure_unit_rows, normalize_rows
from .errors import DimMismatch, DuplicateId, FormatError, UnknownId

DEFAULT_GAMMA = 1.0


@dataclass
class MemoryEntry:
    """One row of the memory: vector, label, optional taxonomy path, quality stats."""

    id: int
    vector: np.ndarray
    label_name: str
    taxonomy_path: list | None = None
    wrong_votes: int = 0
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.wrong_votes == 0:
            self.gamma = DEFAULT_GAMMA


@dataclass
class QuerySet:
    """A labeled pack loaded for querying: ids, unit vectors, label names."""

    ids: np.ndarray            # int64 (Q,)
    vectors: np.ndarray        # float32 (Q, dims), normalized
    label_names: list
    taxonomy_paths: list = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @classmethod
    def load(cls, pack_dir) -> "QuerySet":
        pack = packio.read_pack(pack_dir)
        if pack.count < 1:
            raise FormatError(f"{pack_dir}: query pack is empty")
        return cls(
            ids=pack.ids.astype(np.int64),
            vectors=ensure_unit_rows(pack.vectors),
            label_names=list(pack.label_names),
            taxonomy_paths=list(pack.taxonomy_paths),
        )


class LabelTable:
    """Append-only bidirectional label registry."""

    def __init__(self, names=()):
        self._names: list = []
        self._ids: dict = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        if name in self._ids:
            return self._ids[name]
        lid = len(self._names)
        self._names.append(name)
        self._ids[name] = lid
        return lid

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def name_of(self, lid: int) -> str:
        return self._names[lid]

    def label(self, lid: int) -> Label:
        return Label(id=lid, name=self._names[lid])

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    @property
    def names(self) -> list:
        return list(self._names)


class VisualMemory:
    """Labeled embedding store queried by every other module.

    Mutations (insert/remove) happen in place and bump `generation`;
    anything derived from a previous generation (ANN index, reliability
    report) fails fast instead of silently drifting.
    """

    def __init__(self, dims, ids, vectors, label_ids, label_table,
                 taxonomy_paths=None, wrong_votes=None, gammas=None, manifest=None):
        n = len(ids)
        self.dims = int(dims)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.label_ids = np.asarray(label_ids, dtype=np.int64)
        self.labels = label_table
        self.taxonomy_paths = list(taxonomy_paths) if taxonomy_paths is not None else [None] * n
        self.wrong_votes = (np.asarray(wrong_votes, dtype=np.int64)
                            if wrong_votes is not None else np.zeros(n, dtype=np.int64))
        self.gammas = (np.asarray(gammas, dtype=np.float64)
                       if gammas is not None else np.ones(n, dtype=np.float64))
        self.manifest = dict(manifest) if manifest else {}
        self.generation = 0
        self.gammas[self.wrong_votes == 0] = DEFAULT_GAMMA

    # -- construction ---------------------------------------------------

    @classmethod
    def build(cls, pack_dir) -> "VisualMemory":
        """Build a memory from an embedding pack; vectors are normalized here."""
        pack = packio.read_pack(pack_dir)
        if pack.count < 1:
            raise FormatError(f"{pack_dir}: pack is empty")
        return cls._from_pack(pack)

    @classmethod
    def _from_pack(cls, pack: packio.PackData) -> "VisualMemory":
        if len(np.unique(pack.ids)) != pack.count:
            raise DuplicateId("pack contains duplicate entry ids")
        order = np.argsort(pack.ids, kind="stable")
        vectors = ensure_unit_rows(pack.vectors[order])
        names = pack.manifest.get("labels")
        table = LabelTable(names if names else sorted(set(pack.label_names)))
        for name in pack.label_names:
            if name not in table:
                raise FormatError(f"manifest label table does not cover label {name!r}")
        label_ids = np.array([table.id_of(pack.label_names[i]) for i in order], dtype=np.int64)
        return cls(
            dims=pack.dims,
            ids=pack.ids[order],
            vectors=vectors,
            label_ids=label_ids,
            label_table=table,
            taxonomy_paths=[pack.taxonomy_paths[i] for i in order],
            wrong_votes=pack.wrong_votes[order],
            gammas=pack.gammas[order],
            manifest={"count": pack.count, "dims": pack.dims},
        )

    @classmethod
    def load(cls, directory) -> "VisualMemory":
        """Load a previously saved memory pack (same format as build input)."""
        return cls.build(directory)

    def save(self, directory) -> None:
        """Persist as a pack; load(save(m)) is entry-for-entry identical."""
        pack = packio.PackData(
            dims=self.dims,
            ids=self.ids,
            vectors=self.vectors,
            label_names=[self.labels.name_of(i) for i in self.label_ids],
            taxonomy_paths=self.taxonomy_paths,
            wrong_votes=self.wrong_votes,
            gammas=self.gammas,
        )
        packio.write_pack(directory, pack, extra_manifest={"labels": self.labels.names})

    def copy(self) -> "VisualMemory":
        m = VisualMemory(
            dims=self.dims,
            ids=self.ids.copy(),
            vectors=self.vectors.copy(),
            label_ids=self.label_ids.copy(),
            label_table=LabelTable(self.labels.names),
            taxonomy_paths=[list(p) if p else None for p in self.taxonomy_paths],
            wrong_votes=self.wrong_votes.copy(),
            gammas=self.gammas.copy(),
            manifest=self.manifest,
        )
        m.generation = self.generation
        return m

    # -- access ---------------------------------------------------------

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def row_of(self, entry_id: int) -> int:
        pos = int(np.searchsorted(self.ids, entry_id))
        if pos >= len(self) or self.ids[pos] != entry_id:
            raise UnknownId(f"entry id {entry_id} not in memory")
        return pos

    def __contains__(self, entry_id: int) -> bool:
        pos = int(np.searchsorted(self.ids, entry_id))
        return pos < len(self) and self.ids[pos] == entry_id

    def entry(self, entry_id: int) -> MemoryEntry:
        row = self.row_of(entry_id)
        return MemoryEntry(
            id=int(self.ids[row]),
            vector=self.vectors[row].copy(),
            label_name=self.labels.name_of(self.label_ids[row]),
            taxonomy_path=list(self.taxonomy_paths[row]) if self.taxonomy_paths[row] else None,
            wrong_votes=int(self.wrong_votes[row]),
            gamma=float(self.gammas[row]),
        )

    def label_of_row(self, row: int) -> Label:
        return self.labels.label(int(self.label_ids[row]))

    # -- mutation -------------------------------------------------------

    def insert(self, entries) -> None:
        """Insert new entries; new labels are auto-registered, ids must be fresh."""
        entries = list(entries)
        if not entries:
            return
        new_ids = np.array([e.id for e in entries], dtype=np.int64)
        if len(np.unique(new_ids)) != len(new_ids):
            raise DuplicateId("duplicate ids within the inserted batch")
        for e in entries:
            if e.id in self:
                raise DuplicateId(f"entry id {e.id} already in memory")
            if np.asarray(e.vector).ravel().shape[0] != self.dims:
                raise DimMismatch(
                    f"entry {e.id} has {np.asarray(e.vector).ravel().shape[0]} dims, memory has {self.dims}"
                )
        # register unseen labels in sorted order so the assignment is
        # insensitive to the order entries arrive in
        for name in sorted({e.label_name for e in entries}):
            self.labels.add(name)
        new_vecs = normalize_rows(np.vstack([np.asarray(e.vector, dtype=np.float32).ravel()
                                             for e in entries]))
        new_lids = np.array([self.labels.id_of(e.label_name) for e in entries], dtype=np.int64)
        new_votes = np.array([e.wrong_votes for e in entries], dtype=np.int64)
        new_gammas = np.array([e.gamma if e.wrong_votes else DEFAULT_GAMMA for e in entries],
                              dtype=np.float64)
        new_paths = [list(e.taxonomy_path) if e.taxonomy_path else None for e in entries]

        merged_ids = np.concatenate([self.ids, new_ids])
        order = np.argsort(merged_ids, kind="stable")
        self.ids = merged_ids[order]
        self.vectors = np.ascontiguousarray(np.vstack([self.vectors, new_vecs])[order])
        self.label_ids = np.concatenate([self.label_ids, new_lids])[order]
        self.wrong_votes = np.concatenate([self.wrong_votes, new_votes])[order]
        self.gammas = np.concatenate([self.gammas, new_gammas])[order]
        paths = self.taxonomy_paths + new_paths
        self.taxonomy_paths = [paths[i] for i in order]
        self.generation += 1

    def remove(self, entry_ids) -> None:
        """Physically delete entries; exact unlearning, no tombstones."""
        entry_ids = set(int(i) for i in entry_ids)
        rows = np.array(sorted(self.row_of(i) for i in entry_ids), dtype=np.int64)
        keep = np.ones(len(self), dtype=bool)
        keep[rows] = False
        self.ids = self.ids[keep]
        self.vectors = np.ascontiguousarray(self.vectors[keep])
        self.label_ids = self.label_ids[keep]
        self.wrong_votes = self.wrong_votes[keep]
        self.gammas = self.gammas[keep]
        self.taxonomy_paths = [p for p, k in zip(self.taxonomy_paths, keep) if k]
        self.generation += 1

    def subsample(self, per_class: int, seed: int) -> "VisualMemory":
        """New memory keeping min(per_class, class size) seeded-uniform entries per class.

        Classes are visited in ascending label id; candidates are each
        class's ids sorted ascending, so the draw is reproducible.
        """
        if per_class < 1:
            raise ValueError(f"per_class must be >= 1, got {per_class}")
        rng = np.random.default_rng(seed)
        keep_rows = []
        for lid in range(len(self.labels)):
            rows = np.flatnonzero(self.label_ids == lid)
            if rows.size == 0:
                continue
            m = min(per_class, rows.size)
            keep_rows.append(np.sort(rng.choice(rows, size=m, replace=False)))
        rows = np.sort(np.concatenate(keep_rows))
        sub = VisualMemory(
            dims=self.dims,
            ids=self.ids[rows],
            vectors=self.vectors[rows],
            label_ids=self.label_ids[rows],
            label_table=LabelTable(self.labels.names),
            taxonomy_paths=[self.taxonomy_paths[i] for i in rows],
            wrong_votes=self.wrong_votes[rows],
            gammas=self.gammas[rows],
            manifest=self.manifest,
        )
        return sub

    def set_gamma(self, entry_id: int, gamma: float, wrong_votes: int | None = None) -> None:
        """Update one entry's reliability weight (no generation bump: geometry unchanged).

        Entries with zero wrong votes always carry gamma = 1.0.
        """
        row = self.row_of(entry_id)
        if wrong_votes is not None:
            self.wrong_votes[row] = wrong_votes
        self.gammas[row] = gamma if self.wrong_votes[row] > 0 else DEFAULT_GAMMA

    def ids_checksum(self) -> int:
        """Cheap content fingerprint used to pair persisted indexes with memories."""
        import zlib
        h = zlib.crc32(self.ids.astype("<i8").tobytes())
        h = zlib.crc32(np.int64(self.dims).tobytes(), h)
        return h
