"""Order-preserving parallel map used by every wave-vector sweep.

Work items are independent and results are collected in input order, so the
output is identical for any thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_DEFAULT_THREADS = 1


def set_threads(n: int | None) -> int:
    """Set the default worker count (``None`` or ``0`` means CPU count)."""
    global _DEFAULT_THREADS
    _DEFAULT_THREADS = int(n) if n else (os.cpu_count() or 1)
    if _DEFAULT_THREADS < 1:
        raise ValueError("thread count must be positive")
    return _DEFAULT_THREADS


def get_threads() -> int:
    return _DEFAULT_THREADS


def pmap(fn, items, threads: int | None = None):
    """``[fn(x) for x in items]`` evaluated on a thread pool, in order."""
    items = list(items)
    threads = _DEFAULT_THREADS if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
