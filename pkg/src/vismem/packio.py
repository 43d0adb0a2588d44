"""Embedding-pack I/O: the on-disk format shared by every tool.

A pack is a directory holding three files:

  vectors.bin   magic b"VMEM", u32 LE version (=1), u32 LE dims,
                u64 LE count, then count*dims float32 LE, row-major.
  meta.jsonl    one JSON record per row, in row order:
                {"id": int, "label_name": str,
                 "taxonomy_path": [names...]?, "v": int?, "gamma": float?}
  manifest.json {"version", "count", "dims", "label_count", "created_at"}
                (+ "labels" written by the engine to keep label-id
                assignment stable across save/load round-trips).

All multi-byte integers are little-endian. Unknown versions are rejected.
"""

from __future__ import annotations

import json
import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"VMEM"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIIQ")  # magic, version, dims, count

VECTORS_FILE = "vectors.bin"
META_FILE = "meta.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass
class PackData:
    """In-memory image of one pack, rows still in file order."""

    dims: int
    ids: np.ndarray            # int64, (count,)
    vectors: np.ndarray        # float32, (count, dims), as stored (maybe unnormalized)
    label_names: list
    taxonomy_paths: list       # per-row list[str] or None
    wrong_votes: np.ndarray    # int64, (count,)
    gammas: np.ndarray         # float64, (count,)
    manifest: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return int(self.ids.shape[0])


def created_at_stamp() -> str:
    """UTC ISO-8601 creation stamp; honors SOURCE_DATE_EPOCH for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def read_vectors(path: Path) -> tuple[int, np.ndarray]:
    """Read vectors.bin, returning (dims, float32 array of shape (count, dims))."""
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes, need {HEADER.size})")
    magic, version, dims, count = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at offset 4")
    if dims < 1:
        raise FormatError(f"{path}: dims must be >= 1, got {dims}")
    expected = HEADER.size + 4 * dims * count
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated at offset {len(raw)} (expected {expected} bytes "
            f"for {count} rows x {dims} dims)"
        )
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes after offset {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=HEADER.size, count=dims * count)
    return dims, flat.reshape(count, dims).astype(np.float32)


def write_vectors(path: Path, vectors: np.ndarray) -> None:
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    count, dims = vectors.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, dims, count))
        fh.write(vectors.astype("<f4").tobytes())


def read_meta(path: Path, count: int):
    """Read meta.jsonl; row count must match the vectors.bin header."""
    ids = np.empty(count, dtype=np.int64)
    label_names = []
    taxonomy_paths = []
    wrong_votes = np.zeros(count, dtype=np.int64)
    gammas = np.ones(count, dtype=np.float64)
    n = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if n >= count:
                n += 1
                continue  # keep counting to report the mismatch
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: row {n}: invalid JSON ({exc})") from exc
            try:
                ids[n] = int(rec["id"])
                label_names.append(str(rec["label_name"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}: row {n}: missing or invalid id/label_name") from exc
            taxonomy_paths.append(
                [str(p) for p in rec["taxonomy_path"]] if rec.get("taxonomy_path") else None
            )
            v = int(rec.get("v", 0))
            if v < 0:
                raise FormatError(f"{path}: row {n}: negative wrong-vote count {v}")
            wrong_votes[n] = v
            g = float(rec.get("gamma", 1.0))
            if not (0.0 < g <= 1.0):
                raise FormatError(f"{path}: row {n}: gamma {g} outside (0, 1]")
            gammas[n] = g
            n += 1
    if n != count:
        raise FormatError(f"{path}: {n} meta rows but vectors.bin header says {count}")
    return ids, label_names, taxonomy_paths, wrong_votes, gammas


def write_meta(path: Path, pack: PackData) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(pack.count):
            rec = {"id": int(pack.ids[i]), "label_name": pack.label_names[i]}
            if pack.taxonomy_paths[i]:
                rec["taxonomy_path"] = list(pack.taxonomy_paths[i])
            if pack.wrong_votes[i] != 0:
                rec["v"] = int(pack.wrong_votes[i])
            if pack.gammas[i] != 1.0:
                rec["gamma"] = float(pack.gammas[i])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_pack(directory) -> PackData:
    """Load a pack directory, validating structure along the way."""
    directory = Path(directory)
    vec_path = directory / VECTORS_FILE
    meta_path = directory / META_FILE
    manifest_path = directory / MANIFEST_FILE
    for p in (vec_path, meta_path):
        if not p.is_file():
            raise FormatError(f"{p}: missing")
    dims, vectors = read_vectors(vec_path)
    count = vectors.shape[0]
    ids, label_names, taxonomy_paths, wrong_votes, gammas = read_meta(meta_path, count)
    manifest = {}
    if manifest_path.is_file():
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
        if manifest.get("count") is not None and int(manifest["count"]) != count:
            raise FormatError(
                f"{manifest_path}: manifest count {manifest['count']} != {count} rows"
            )
        if manifest.get("dims") is not None and int(manifest["dims"]) != dims:
            raise FormatError(f"{manifest_path}: manifest dims {manifest['dims']} != {dims}")
    return PackData(
        dims=dims,
        ids=ids,
        vectors=vectors,
        label_names=label_names,
        taxonomy_paths=taxonomy_paths,
        wrong_votes=wrong_votes,
        gammas=gammas,
        manifest=manifest,
    )


def write_pack(directory, pack: PackData, extra_manifest: dict | None = None) -> None:
    """Write a pack directory (vectors.bin, meta.jsonl, manifest.json)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_vectors(directory / VECTORS_FILE, pack.vectors)
    write_meta(directory / META_FILE, pack)
    manifest = {
        "version": FORMAT_VERSION,
        "count": pack.count,
        "dims": pack.dims,
        "label_count": len(set(pack.label_names)),
        "created_at": created_at_stamp(),
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate_pack(directory) -> list:
    """Format-check a pack without building a memory from it.

    Returns a list of issue strings; an empty list means the pack is valid.
    Checks: magic/version, dims/count consistency, truncation, meta row
    count, component finiteness.
    """
    issues = []
    directory = Path(directory)
    try:
        pack = read_pack(directory)
    except FormatError as exc:
        return [str(exc)]
    if not np.all(np.isfinite(pack.vectors)):
        rows = np.flatnonzero(~np.isfinite(pack.vectors).all(axis=1))
        issues.append(f"{directory / VECTORS_FILE}: non-finite components in rows {rows[:5].tolist()}")
    if len(np.unique(pack.ids)) != pack.count:
        issues.append(f"{directory / META_FILE}: duplicate entry ids")
    return issues
