from __future__ import annotations

import logging
import os
from multiprocessing import Pool
from typing import Callable, Iterable, TypeVar

from funcy import chunks


"""Process-pool helpers shared by the trajectory engine and the experiment
harness.

Work items carry their own random streams, so the result of map_ordered never
depends on the number of workers. QJUMP_THREADS caps the worker count; when it
is unset, everything runs serially in the calling process.
"""


THREADS_VARIABLE = "QJUMP_THREADS"

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def thread_cap() -> int:
    """Return the worker cap from QJUMP_THREADS, 1 when unset.

    Raises:
        ValueError: If the variable is not a positive integer.
    """
    value = os.environ.get(THREADS_VARIABLE, "").strip()
    if not value:
        return 1
    try:
        cap = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_VARIABLE} must be a positive integer: {value!r}")
    if cap < 1:
        raise ValueError(f"{THREADS_VARIABLE} must be a positive integer: {value!r}")
    return cap


def resolve_workers(workers: int | None = None) -> int:
    """Return the number of worker processes to use.

    An explicit request is capped by QJUMP_THREADS; no request means the cap
    itself.
    """
    cap = thread_cap()
    if workers is None:
        return cap
    if workers < 1:
        raise ValueError(f"Invalid number of workers: {workers}")
    return min(workers, cap)


def map_ordered(
    function: Callable[[T], R],
    items: Iterable[T],
    workers: int | None = None,
) -> list[R]:
    """Return [function(item) for item in items], computed by a process pool
    when more than one worker is available. The function must be picklable.
    """
    items = list(items)
    count = min(resolve_workers(workers), len(items))
    if count <= 1:
        return [function(item) for item in items]
    logger.debug("Mapping %d items over %d workers", len(items), count)
    with Pool(processes=count) as pool:
        return pool.map(function, items)


def split_range(total: int, size: int) -> list[range]:
    """Split range(total) into consecutive ranges of at most size elements."""
    if size < 1:
        raise ValueError(f"Invalid chunk size: {size}")
    return [range(part[0], part[-1] + 1) for part in chunks(size, range(total))]
