"""Small shared helpers: worker-count control and order-preserving maps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "GCNX_THREADS"


def worker_count() -> int:
    """Worker cap from the GCNX_THREADS environment variable (default 1)."""
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map preserving input order; uses threads only when allowed to, so
    results are identical for any worker count."""
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
