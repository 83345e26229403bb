# -*- coding: utf-8 -*-

"""
Miscellaneous utilities
"""

from __future__ import annotations

from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from agentseg.config import get_thread_count

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], threads: int | None = None
) -> list[R]:
    """Map `func` over `items`, returning results in input order.

    Args:
        func: function applied to each item
        items: input items
        threads: worker count (defaults to the ``AGENTSEG_THREADS`` setting)

    Returns:
        List of results, ordered as `items`
    """
    items = list(items)
    threads = get_thread_count() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as executor:
        return list(executor.map(func, items))
