"""Ordered fan-out of independent jobs over a thread pool."""

import concurrent.futures
from typing import Callable, List, TypeVar

T = TypeVar("T")


def split_count(total: int, parts: int) -> List[int]:
    """Split ``total`` into ``parts`` near-equal non-negative counts, larger ones first."""
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def map_ordered(fn: Callable[[int], T], count: int, workers: int = 1) -> List[T]:
    """Run ``fn(0) ... fn(count - 1)`` and return results in index order.

    Results never depend on scheduling, so callers that merge them in the
    returned order are reproducible for a fixed ``count``.
    """
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))
