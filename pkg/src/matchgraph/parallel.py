"""Deterministic fan-out helpers.

Work is split over a thread pool but results are always merged back in input
order, so the output is byte-identical for any worker count. Callables passed
here must be pure with respect to shared state.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Apply fn to every item, preserving input order in the result list."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(items: Sequence[T], size: int) -> Iterable[Sequence[T]]:
    """Yield successive fixed-size slices; the last one may be shorter."""
    for start in range(0, len(items), size):
        yield items[start : start + size]


def seed_key(seed: int) -> int:
    """Map any Python int onto the unsigned 64-bit range numpy seeds accept."""
    return seed & 0xFFFF_FFFF_FFFF_FFFF
