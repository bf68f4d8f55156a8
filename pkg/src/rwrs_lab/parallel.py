"""Deterministic fan-out of independent replica computations.

Workers receive (payload, lo, hi) index ranges and return a dict of numpy
arrays for their slice.  Results are reassembled in index order, so the
output is bit-identical for any worker count: parallelism never changes what
a replica computes, only where.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

ENV_THREADS = "RWRS_LAB_THREADS"


def default_workers() -> int:
    env = os.environ.get(ENV_THREADS, "")
    if env.strip():
        try:
            v = int(env)
            if v >= 1:
                return v
        except ValueError:
            pass
    return os.cpu_count() or 1


def resolve_workers(requested: int) -> int:
    """0 means `use the environment/machine default`."""
    return requested if requested >= 1 else default_workers()


def chunked_map(fn, payload, total: int, workers: int,
                min_chunk: int = 1) -> dict[str, np.ndarray]:
    """Run fn(payload, lo, hi) over [0, total) and concatenate per-key arrays.

    ``fn`` must be a module-level function (picklable).  Chunks are merged in
    index order regardless of completion order.
    """
    if total <= 0:
        raise ValueError("total must be positive")
    workers = max(1, min(workers, total))
    if workers == 1:
        return fn(payload, 0, total)
    per = max(min_chunk, (total + workers * 4 - 1) // (workers * 4))
    bounds = [(lo, min(lo + per, total)) for lo in range(0, total, per)]
    parts: list[dict[str, np.ndarray] | None] = [None] * len(bounds)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, payload, lo, hi): i
                   for i, (lo, hi) in enumerate(bounds)}
        for fut, i in futures.items():
            parts[i] = fut.result()
    keys = parts[0].keys()
    return {k: np.concatenate([p[k] for p in parts]) for k in keys}
