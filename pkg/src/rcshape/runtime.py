"""Seeding and worker-pool helpers shared by the Monte Carlo drivers."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV = "RCSHAPE_WORKERS"


def child_rng(master: int, *keys: int) -> np.random.Generator:
    """Generator for stream ``keys`` under ``master``; independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence([int(master), *map(int, keys)]))


def child_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1, np.uint64)[0] >> np.uint64(1))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        val = int(raw)
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if val < 1:
        raise ValueError(f"{WORKERS_ENV} must be at least 1, got {val}")
    return val


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]`` on up to ``workers`` processes, results in input order."""
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
