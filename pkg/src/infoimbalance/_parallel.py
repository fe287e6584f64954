"""Worker-count control shared by the numerical kernels."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

from threadpoolctl import threadpool_limits

_workers = 1


def max_threads() -> int:
    return os.cpu_count() or 1


def get_num_threads() -> int:
    return _workers


@contextmanager
def num_threads(n: int | None):
    """Cap row-block workers and BLAS threads to ``n`` (None = all cores)."""
    global _workers
    n = max_threads() if n is None or n <= 0 else int(n)
    previous = _workers
    _workers = n
    try:
        with threadpool_limits(limits=n):
            yield n
    finally:
        _workers = previous


def map_ordered(fn, items):
    """``list(map(fn, items))``, spread over the configured workers.

    Results come back in input order, so callers that concatenate them
    get the same bytes for any worker count.
    """
    items = list(items)
    if _workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(_workers, len(items))) as pool:
        return list(pool.map(fn, items))
