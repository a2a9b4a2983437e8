"""Per-ego work distribution."""

import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Apply ``fn`` to every item, in input order, on up to ``threads`` workers.

    Results come back in input order whatever the worker count, so reductions
    over them are reproducible.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Dispatching {len(items)} items to {threads} threads")
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))
