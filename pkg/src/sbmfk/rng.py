"""Counter-based random streams and order-preserving parallel maps.

Every Monte Carlo routine splits its paths into fixed blocks of
``BLOCK_SIZE`` paths.  Block ``b`` of logical stream ``s`` under global seed
``g`` always draws from the Philox generator keyed by ``(g, s, b)``, so the
numbers a path sees do not depend on how many workers process the blocks.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 1 << 14

T = TypeVar("T")


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Generator for one block of one logical stream."""
    if seed < 0 or stream < 0 or block < 0:
        raise ValueError("seed, stream and block must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_sizes(n: int, block_size: int = BLOCK_SIZE) -> list[int]:
    """Sizes of the consecutive blocks covering ``n`` paths."""
    if n <= 0:
        return []
    full, rest = divmod(n, block_size)
    return [block_size] * full + ([rest] if rest else [])


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def map_blocks(
    fn: Callable[[int, int], T],
    n: int,
    workers: int | None = None,
    block_size: int = BLOCK_SIZE,
) -> list[T]:
    """Apply ``fn(block_index, block_len)`` to every block, keeping order.

    The result list is ordered by block index whatever the worker count, and
    reductions downstream are performed in that order.
    """
    sizes = block_sizes(n, block_size)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(sizes) <= 1:
        return [fn(b, m) for b, m in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, b, m) for b, m in enumerate(sizes)]
        return [f.result() for f in futures]


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.empty(0)
