"""Process-level fan-out with deterministic, index-ordered results."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else ``AUTORESON_THREADS``, else 1."""
    if workers is None:
        env = os.environ.get("AUTORESON_THREADS")
        workers = int(env) if env else 1
    return max(1, int(workers))


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally across processes, in input order."""
    items = list(items)
    k = min(resolve_workers(workers), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, items))
