"""Deterministic chunked reductions for O(N^2) pair sums.

Targets are split into fixed blocks and sources into fixed chunks.  Each
(block, chunk) tile is reduced by numpy along the source axis, and the tiles
are accumulated in source-index order with Kahan compensation.  Blocks are
independent, so handing them to a thread pool changes nothing bit-wise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 256
_threads: int | None = None


def set_num_threads(k: int | None) -> None:
    global _threads
    if k is not None and int(k) < 1:
        raise ValueError("thread count must be >= 1")
    _threads = None if k is None else int(k)


def get_num_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get("MFLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def kahan_sum(values, axis: int = 0):
    """Compensated sum along ``axis`` in index order."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    s = np.zeros(values.shape[1:])
    c = np.zeros(values.shape[1:])
    for x in values:
        y = x - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def exact_total(values) -> float:
    """Correctly rounded sum of a flat array (order independent)."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def row_sums(tile, n_targets: int, n_sources: int, width: int, chunk: int = CHUNK,
             threads: int | None = None) -> np.ndarray:
    """Return out[i] = sum_j tile contributions, as an (n_targets, width) array.

    ``tile(i0, i1, j0, j1)`` returns the (i1 - i0, width) partial sums of the
    targets [i0, i1) over the sources [j0, j1).
    """
    out = np.empty((n_targets, width))
    starts = list(range(0, n_targets, chunk))

    def work(i0):
        i1 = min(i0 + chunk, n_targets)
        s = np.zeros((i1 - i0, width))
        c = np.zeros_like(s)
        for j0 in range(0, n_sources, chunk):
            x = tile(i0, i1, j0, min(j0 + chunk, n_sources))
            y = x - c
            t = s + y
            c = (t - s) - y
            s = t
        out[i0:i1] = s

    k = threads if threads is not None else get_num_threads()
    if k <= 1 or len(starts) <= 1:
        for i0 in starts:
            work(i0)
    else:
        with ThreadPoolExecutor(max_workers=k) as pool:
            list(pool.map(work, starts))
    return out
