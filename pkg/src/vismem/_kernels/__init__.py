"""Kernel backend selection: compiled scan when available, numpy otherwise.

VISMEM_BACKEND=numpy|cython forces a backend (cython raises if the
extension is missing); the default "auto" prefers the compiled scan.
Both backends implement the same contract: top-k by (cosine distance,
row index) ascending, float64 accumulation, distances clipped to [0, 2].
"""

from __future__ import annotations

import os

from . import _scan_np

try:
    from . import _scan_cy
except ImportError:  # extension not built; pure-Python install
    _scan_cy = None

_BACKENDS = {"numpy": _scan_np}
if _scan_cy is not None:
    _BACKENDS["cython"] = _scan_cy


def _select():
    choice = os.environ.get("VISMEM_BACKEND", "auto").lower()
    if choice == "auto":
        return "cython" if _scan_cy is not None else "numpy"
    if choice not in _BACKENDS:
        raise RuntimeError(
            f"VISMEM_BACKEND={choice!r} unavailable (have: {sorted(_BACKENDS)})"
        )
    return choice


_ACTIVE = _select()


def backend_name() -> str:
    return _ACTIVE


def available_backends() -> list:
    return sorted(_BACKENDS)


def default_threads() -> int:
    return int(os.environ.get("VISMEM_THREADS", "0"))


def topk_scan(matrix, queries, k, threads=None, backend=None,
              row_block=None, query_block=None):
    """Dispatch the top-k scan to the active (or named) backend.

    row_block/query_block tune the numpy backend's blocking (the compiled
    scan is single-pass and accepts them for interface parity).
    """
    mod = _BACKENDS[backend or _ACTIVE]
    if threads is None:
        threads = default_threads()
    kwargs = {}
    if row_block is not None:
        kwargs["row_block"] = row_block
    if query_block is not None:
        kwargs["query_block"] = query_block
    return mod.topk_scan(matrix, queries, k, threads, **kwargs)
