from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar
import logging

from trendbands.exceptions import InvalidConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ReplicationScheduler:
    """Runs independent indexed tasks and hands results back in task order.

    Every task owns its random stream, so the result list does not depend on
    the worker count or on completion order.
    """

    MODES = ("thread", "process")

    def __init__(self, workers: int = 1, mode: str = "thread"):
        if workers < 1:
            raise InvalidConfigError(f"worker count must be positive, got {workers}")
        if mode not in self.MODES:
            raise InvalidConfigError(f"unknown scheduler mode {mode!r}")
        self.workers = workers
        self.mode = mode

    def _executor(self) -> Executor:
        if self.mode == "process":
            return ProcessPoolExecutor(max_workers=self.workers)
        return ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="trendbands")

    def map(self, fn: Callable[[T], R], tasks: Sequence[T]) -> List[R]:
        if self.workers == 1 or len(tasks) <= 1:
            return [fn(task) for task in tasks]
        logger.debug("dispatching %d tasks to %d %s workers", len(tasks), self.workers, self.mode)
        with self._executor() as pool:
            # Executor.map yields in submission order
            return list(pool.map(fn, tasks))

    def chunks(self, count: int) -> List[Tuple[int, int]]:
        """Split ``range(count)`` into at most ``workers`` contiguous (start, stop) pieces."""
        pieces = min(self.workers, max(count, 1))
        bounds = [round(i * count / pieces) for i in range(pieces + 1)]
        return [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
