from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from diagnet.utilities.definitions import thread_count

T = TypeVar('T')
R = TypeVar('R')


class WorkerPool:
    """
    Ordered map over a thread pool sized by DIAGNET_THREADS. Results come back
    in submission order so reductions over them are deterministic.
    """
    def __init__(self, workers: Optional[int] = None):
        self._workers: int = workers or thread_count()
        self._executor: Optional[ThreadPoolExecutor] = None

    @property
    def workers(self) -> int:
        return self._workers

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self._workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self._workers)
        return list(self._executor.map(fn, items))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
