"""Thread-count control for the row-parallel kernels.

Gather-style kernels (backward warping, merge) can split their output rows
across a thread pool: each worker writes a disjoint row slice of a
preallocated array, so results are bit-identical for every thread count.
Scatter-style kernels (forward splatting) stay single-threaded by design;
their accumulation order is part of the determinism contract.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

_num_threads = 1

# Below this many rows the pool overhead dominates; run inline.
_MIN_ROWS_PER_THREAD = 64


def set_num_threads(n: int) -> None:
    """Set worker count; 0 means auto (one per CPU)."""
    global _num_threads
    if n < 0:
        raise ValueError(f"thread count must be >= 0, got {n}")
    _num_threads = n if n > 0 else (os.cpu_count() or 1)


def get_num_threads() -> int:
    return _num_threads


def row_chunks(height: int, workers: int) -> list[tuple[int, int]]:
    """Split [0, height) into `workers` contiguous [start, stop) spans."""
    workers = max(1, min(workers, height))
    base, extra = divmod(height, workers)
    spans = []
    start = 0
    for i in range(workers):
        stop = start + base + (1 if i < extra else 0)
        spans.append((start, stop))
        start = stop
    return spans


def run_rows(worker: Callable[[int, int], None], height: int) -> None:
    """Invoke worker(start, stop) over row spans, possibly in parallel.

    The worker must only write to rows in its own span.
    """
    n = _num_threads
    if n <= 1 or height < _MIN_ROWS_PER_THREAD * 2:
        worker(0, height)
        return
    spans = row_chunks(height, n)
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        futures = [pool.submit(worker, a, b) for a, b in spans]
        for f in futures:
            f.result()
