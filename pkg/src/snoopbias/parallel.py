"""Run independent replications serially or on a process pool.

Each replication derives its own random stream from its index, so the
collected results are identical for any worker count; they are always
returned in replication order.
"""
from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor


def _run_block(func, start, stop):
    return [func(r) for r in range(start, stop)]


def map_replications(func, reps: int, workers: int = 1) -> list:
    """``[func(0), ..., func(reps - 1)]``; ``func`` must be picklable when ``workers > 1``."""
    if workers <= 1 or reps < 2:
        return [func(r) for r in range(reps)]
    n_blocks = min(reps, 4 * workers)
    bounds = [reps * i // n_blocks for i in range(n_blocks + 1)]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(_run_block, func, lo, hi) for lo, hi in zip(bounds, bounds[1:])]
        out = []
        for fut in futures:
            out.extend(fut.result())
    return out
