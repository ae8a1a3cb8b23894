from dataclasses import dataclass
from multiprocessing import Pool, cpu_count
from typing import Callable, Iterable, List, TypeVar

from .logging import get_process_logger, init_session, init_worker_logging

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class Parallelism:
    """Parallelism handle passed down from the CLI.

    Modules never create pools themselves; they call :meth:`map`, which keeps
    submission order so that results do not depend on the worker count.
    ``fn`` must be a module-level (picklable) callable when ``jobs > 1``.
    """

    jobs: int = 1

    def workers_for(self, n_tasks: int) -> int:
        if self.jobs <= 1 or n_tasks <= 1:
            return 1
        if self.jobs >= cpu_count():
            return max(1, min(n_tasks, cpu_count() - 1))
        return min(n_tasks, self.jobs)

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        tasks = list(items)
        workers = self.workers_for(len(tasks))
        if workers == 1:
            return [fn(task) for task in tasks]

        logger_base = get_process_logger()
        logger_base.debug(f"Dispatching {len(tasks)} tasks to {workers} workers")
        session_id = init_session()
        with Pool(processes=workers, initializer=init_worker_logging, initargs=(session_id,)) as pool:
            return pool.map(fn, tasks)


SERIAL = Parallelism(jobs=1)
