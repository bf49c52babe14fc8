"""Work-distribution helpers shared by sweeps and benchmarking runs."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


class SerialExecutor:
    """Executor with the stdlib interface that runs everything inline."""

    def map(self, fn, *iterables):
        return map(fn, *iterables)

    def shutdown(self, wait: bool = True) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def make_executor(threads: int | None):
    """Executor for ``threads`` workers: 1 or None runs serial, 0 sizes the
    pool from the CPU count.  Thread pools preserve map ordering."""
    if threads is None or threads == 1:
        return SerialExecutor()
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads < 0:
        raise ValueError(f"thread count must be >= 0, got {threads}")
    if threads == 1:
        return SerialExecutor()
    return ThreadPoolExecutor(max_workers=threads)
