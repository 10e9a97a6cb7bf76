from multiprocessing import Pool
from typing import Callable, Iterable, List, TypeVar

import settings

T = TypeVar("T")
R = TypeVar("R")


def map_replicates(worker: Callable[[T], R], tasks: Iterable[T], workers: int = None) -> List[R]:
    """Run worker over tasks, in a process pool when workers > 1.

    Results come back in task order; every task carries its own seed, so the
    output does not depend on the number of workers. worker must be a
    module-level function so it can be pickled.
    """
    tasks = list(tasks)
    workers = settings.WORKERS if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(worker, tasks)
