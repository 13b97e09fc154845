"""
Scene-level parallelism with ordered results.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

from src.errors import ContractError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """
    Apply fn to every item; results come back in input order.

    workers == 1 runs inline on the calling thread. The first exception raised
    by any item propagates once every submitted item has finished.
    """
    if workers < 1:
        raise ContractError(f"workers must be >= 1, got {workers}")
    items = list(items)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"[parallel] {len(items)} items on {min(workers, len(items))} threads")
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        futures = [pool.submit(fn, item) for item in items]
    return [f.result() for f in futures]
