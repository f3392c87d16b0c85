import concurrent.futures
from typing import Any, Callable, Dict, List, Optional, Tuple

from msgtrace.sdk import Spans

from irgaflux._private.executor import Executor
from irgaflux.logger import logger

__all__ = ["map_gather"]


@Spans.instrument()
def map_gather(
    to_send: Callable,
    *,
    args_list: List[Tuple[Any, ...]],
    kwargs_list: Optional[List[Dict[str, Any]]] = None,
    executor: Optional[Executor] = None,
    timeout: Optional[float] = None,
) -> Tuple[Any, ...]:
    """Applies `to_send` to each set of arguments on a thread pool and
    collects the results in submission order.

    Args:
        to_send:
            The callable applied to every argument set.
        args_list:
            Positional arguments, one tuple per task.
        kwargs_list:
            Named arguments, one dict per task. Must match `args_list` in length.
        executor:
            Pool to run on. The shared `Executor.get_instance()` if None.
        timeout:
            Maximum time (in seconds) to wait for all tasks.

    Returns:
        A tuple with one result per task, ordered like `args_list`.

    Raises:
        TypeError:
            If `to_send` is not callable.
        ValueError:
            If `args_list` is empty or `kwargs_list` has a different length.
        Exception:
            The first task failure, re-raised after every failure is logged.

    Examples:
        def add(x, y): return x + y
        results = F.map_gather(add, args_list=[(1, 2), (3, 4), (5, 6)])
        print(results)  # (3, 7, 11)
    """
    if not callable(to_send):
        raise TypeError("`to_send` must be a callable object")

    if not isinstance(args_list, list) or len(args_list) == 0:
        raise ValueError("`args_list` must be a non-empty list")

    if kwargs_list is not None:
        if not isinstance(kwargs_list, list) or len(kwargs_list) != len(args_list):
            raise ValueError(
                "`kwargs_list` must be a list with the same length as `args_list`"
            )

    executor = executor or Executor.get_instance()
    futures = []
    for i, args in enumerate(args_list):
        kwargs = kwargs_list[i] if kwargs_list else {}
        futures.append(executor.submit(to_send, *args, **kwargs))

    concurrent.futures.wait(futures, timeout=timeout)
    responses: List[Any] = []
    first_error: Optional[BaseException] = None
    for i, future in enumerate(futures):
        try:
            responses.append(future.result(timeout=0))
        except Exception as e:
            name = getattr(to_send, "__name__", repr(to_send))
            logger.error("Task %d of `%s` failed: %s: %s", i, name, type(e).__name__, e)
            if first_error is None:
                first_error = e
            responses.append(None)
    if first_error is not None:
        raise first_error
    return tuple(responses)
