"""Domain primitives: labels, vector normalization, cosine distance.

Vectors are float32 row vectors, L2-normalized exactly once at ingest.
All distances thereafter are 1 - dot(a, b), accumulated in float64 and
clipped to the valid cosine range [0, 2] (float32 rounding can push the
raw value a few ulp outside it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NonFinite, ZeroVector

NORM_EPS = 1e-12


@dataclass(frozen=True)
class Label:
    """A class label: integer id unique within one memory, plus its name."""

    id: int
    name: str


def normalize(v) -> np.ndarray:
    """Return v scaled to unit L2 norm as float32.

    Raises NonFinite on NaN/Inf components and ZeroVector when the norm
    is below 1e-12. The norm is computed in float64 for stability.
    """
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size < 1:
        raise ZeroVector("cannot normalize an empty vector")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("vector has NaN or Inf components")
    norm = float(np.sqrt(np.dot(arr, arr)))
    if norm < NORM_EPS:
        raise ZeroVector(f"vector norm {norm:g} below {NORM_EPS:g}")
    return (arr / norm).astype(np.float32)


def normalize_rows(matrix) -> np.ndarray:
    """Normalize every row of a 2-D array to unit L2 norm, as float32.

    Row-wise equivalent of normalize(); used at pack ingest.
    """
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise DimMismatch(f"expected a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise NonFinite(f"row {bad} has NaN or Inf components")
    norms = np.sqrt(np.einsum("ij,ij->i", arr, arr))
    if np.any(norms < NORM_EPS):
        bad = int(np.flatnonzero(norms < NORM_EPS)[0])
        raise ZeroVector(f"row {bad} has norm below {NORM_EPS:g}")
    return (arr / norms[:, None]).astype(np.float32)


def ensure_unit_rows(matrix, tol: float = 1e-6) -> np.ndarray:
    """Normalize rows, keeping bit-exact any row already unit within tol.

    Ingest path for packs: renormalizing an already-normalized float32 row
    can flip low bits, which would break save/load idempotence.
    """
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2:
        raise DimMismatch(f"expected a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise NonFinite(f"row {bad} has NaN or Inf components")
    norms = np.sqrt(np.einsum("ij,ij->i", arr.astype(np.float64), arr.astype(np.float64)))
    off = np.abs(norms - 1.0) > tol
    if not np.any(off):
        return arr
    if np.any(norms[off] < NORM_EPS):
        bad = int(np.flatnonzero(off & (norms < NORM_EPS))[0])
        raise ZeroVector(f"row {bad} has norm below {NORM_EPS:g}")
    out = arr.copy()
    out[off] = (arr[off].astype(np.float64) / norms[off][:, None]).astype(np.float32)
    return out


def cosine_distance(a, b) -> float:
    """Cosine distance 1 - <a, b> between unit vectors, clipped to [0, 2]."""
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise DimMismatch(f"dims {a.shape} vs {b.shape}")
    sim = float(np.dot(a.astype(np.float64), b.astype(np.float64)))
    return min(max(1.0 - sim, 0.0), 2.0)
