"""Thread pool for independent Monte Carlo tasks.

Work is split into tasks by the caller (one per quadrature node, start
chunk, x level ...). The worker count only changes how tasks are
scheduled; each task owns its RNG stream, and results are always returned
in task order, so output does not depend on the number of workers.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

from config import runtime_config

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class TaskPool:
    """Ordered map over a fixed task list."""

    def __init__(self, workers: Optional[int] = None):
        self.workers = max(1, int(workers if workers is not None else runtime_config.workers))
        self._lock = threading.Lock()
        self.tasks_run = 0

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply fn to every item; results keep the order of items."""
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            results = [fn(item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="gausscov") as ex:
                results = list(ex.map(fn, items))
        with self._lock:
            self.tasks_run += len(items)
        logger.debug(f"TaskPool ran {len(items)} tasks on {self.workers} worker(s)")
        return results


def chunk_ranges(total: int, size: int) -> Sequence[range]:
    """Split range(total) into consecutive chunks of at most `size`."""
    size = max(1, int(size))
    return [range(start, min(start + size, total)) for start in range(0, total, size)]


_default_pool: Optional[TaskPool] = None


def default_pool() -> TaskPool:
    global _default_pool
    if _default_pool is None:
        _default_pool = TaskPool()
    return _default_pool
