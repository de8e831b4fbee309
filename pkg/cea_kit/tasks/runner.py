"""Thread-pool task runner with exception logging."""
import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import Any, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_parallel(
    fn: Callable[[T], R],
    items: Iterable[T],
    threads: int = 1,
    context: dict[str, Any] | None = None,
) -> list[R]:
    """Map ``fn`` over ``items`` and return the results in input order.

    Args:
        fn: Function applied to every item
        items: Work items
        threads: Worker threads; 1 runs serially in the calling thread
        context: Optional context dictionary for logging

    Returns:
        Results in the order of ``items``, whatever the completion order
    """
    items = list(items)
    context = context or {}
    context_str = ", ".join(f"{k}={v}" for k, v in context.items())

    try:
        logger.debug(f"Starting {len(items)} tasks on {threads} thread(s) [{context_str}]")
        if threads <= 1 or len(items) <= 1:
            results = [fn(item) for item in items]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(fn, items))
        logger.debug(f"Tasks completed successfully [{context_str}]")
        return results
    except Exception as e:
        logger.error(
            f"Task failed [{context_str}]: {str(e)}",
            exc_info=True,
            extra={"task_context": context},
        )
        raise
