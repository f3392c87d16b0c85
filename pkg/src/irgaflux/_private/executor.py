import threading
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Optional

from irgaflux.envs import envs


class Executor:
    """Thread pool for independent numerical tasks.

    numpy and scipy release the GIL inside their kernels, so threads give
    real parallelism for the per-block IRGA fits and Monte Carlo substreams.
    A shared instance sized by `IRGAFLUX_EXECUTOR_NUM_THREADS` is available
    through `get_instance()`; callers that own a pool of a given size (the CLI)
    create one explicitly and use it as a context manager.
    """

    _instance = None
    _lock = threading.Lock()

    def __init__(self, num_threads: Optional[int] = None):
        self.num_threads = max(1, int(num_threads or envs.executor_num_threads))
        self.thread_pool = ThreadPoolExecutor(
            max_workers=self.num_threads, thread_name_prefix="irgaflux"
        )

    @classmethod
    def get_instance(cls) -> "Executor":
        """Returns the singleton instance in a thread-safe manner."""
        if cls._instance is None:
            with cls._lock:
                if cls._instance is None:
                    cls._instance = cls()
        return cls._instance

    def submit(self, f: Callable, *args, **kwargs) -> Future:
        """Submits a task to the pool. Returns a Future to track the result."""
        return self.thread_pool.submit(f, *args, **kwargs)

    def shutdown(self):
        """Shutdown the executor, closing the pool."""
        self.thread_pool.shutdown(wait=True)

    def __enter__(self) -> "Executor":
        return self

    def __exit__(self, *exc_info):
        self.shutdown()
