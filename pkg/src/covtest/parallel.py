"""Order-preserving trial-parallel map.

Work is split into contiguous chunks of trial indices. Each trial draws its
randomness from its own (seed, stream) pair, and results are concatenated in
trial order, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")


def chunk_ranges(n: int, workers: int, per_worker: int = 4) -> list[range]:
    if n <= 0:
        return []
    pieces = max(1, min(n, workers * per_worker))
    size = math.ceil(n / pieces)
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def map_chunks(fn: Callable[[range], T], n: int, workers: int = 1) -> list[T]:
    """Apply `fn` to chunks of ``range(n)``; returns results in chunk order.

    `fn` must be picklable when ``workers > 1``.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    chunks = chunk_ranges(n, workers)
    if workers == 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def flatten(parts: Sequence[Sequence[T]]) -> list[T]:
    return [item for part in parts for item in part]
