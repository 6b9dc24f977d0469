#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/07 17:12
@File    : bound_thread_pool.py
"""
import queue
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from utils.log import Logger

T = TypeVar("T")
R = TypeVar("R")

logger = Logger('BoundedThreadPool')


class BoundedThreadPoolExecutor(ThreadPoolExecutor):
    """ThreadPoolExecutor whose ``submit`` blocks once ``max_queue_size`` tasks are waiting."""

    def __init__(self, max_workers=None, max_queue_size=None, thread_name_prefix='terra-run'):
        super().__init__(max_workers, thread_name_prefix)
        self._work_queue = queue.Queue(max_queue_size or 0)

    def map_ordered(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Run ``fn`` over ``items``; results come back in input order, the first failure is re-raised."""
        futures: List[Future] = [self.submit(fn, item) for item in items]
        results = []
        for i, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as e:
                logger.error(f"task {i} failed: {e}")
                for pending in futures[i + 1:]:
                    pending.cancel()
                raise
        return results
