"""Thread-cap helper: DUPIN_THREADS bounds intra-step parallelism."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["worker_count", "pmap"]


def worker_count() -> int:
    val = os.environ.get("DUPIN_THREADS", "1")
    try:
        return max(1, int(val))
    except ValueError:
        return 1


def pmap(fn, items):
    """Map with a deterministic result order; threads only when allowed."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
