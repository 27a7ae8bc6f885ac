import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from utils.exceptions import ValidationError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class ThreadManager:
    """
    Runs independent tasks (replicates, folds, λ entries) on a worker pool.

    Results always come back in submission order, so a parallel run produces
    exactly the same tables as a serial one.

    Args:
        n_jobs: Number of worker threads; 1 runs tasks inline
    """

    def __init__(self, n_jobs: int = 1):
        if n_jobs < 1:
            raise ValidationError(
                f"n_jobs must be a positive integer, got {n_jobs}",
                field="n_jobs",
                value=n_jobs,
            )
        self.n_jobs = n_jobs

    def map(self, func: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Applies ``func`` to every item and returns results in input order.

        The first exception raised by a task is re-raised after all submitted
        tasks have finished.
        """
        items = list(items)
        if self.n_jobs == 1 or len(items) <= 1:
            return [func(item) for item in items]

        logger.debug(f"Dispatching {len(items)} tasks to {self.n_jobs} workers")
        with ThreadPoolExecutor(max_workers=self.n_jobs) as executor:
            futures = [executor.submit(func, item) for item in items]
            return [future.result() for future in futures]
