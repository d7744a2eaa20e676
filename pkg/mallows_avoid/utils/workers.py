"""
Worker pool sizing and order-preserving fan-out.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import psutil
from loguru import logger

THREADS_ENV = "MALLOWS_AVOID_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count(requested: Optional[int] = None) -> int:
    """
    Number of workers to use.

    Args:
        requested: Explicit request, or None for the machine default

    Returns:
        Worker count, at least 1 and capped by MALLOWS_AVOID_THREADS
    """
    count = requested or psutil.cpu_count(logical=False) or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
    return max(1, int(count))


def map_in_pool(
    fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None
) -> List[R]:
    """
    Apply fn to every item, in a process pool when more than one worker is
    available. Results come back in input order.
    """
    workers = min(worker_count(workers), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Fanning out {len(items)} tasks over {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
