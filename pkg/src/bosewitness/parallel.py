"""Thread-pool helper whose width comes from BOSEWITNESS_THREADS."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "BOSEWITNESS_THREADS"


def thread_count(default: int | None = None) -> int:
    raw = os.environ.get(ENV_THREADS, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
        return n
    return default or min(8, os.cpu_count() or 1)


def ordered_map(fn, items, threads: int | None = None) -> list:
    """Apply fn to every item, possibly in parallel, returning results in input order."""
    items = list(items)
    n = threads or thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
