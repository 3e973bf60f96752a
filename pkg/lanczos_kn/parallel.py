"""Concurrent evaluation of independent (shift, variant) tasks."""

import asyncio
import logging
from typing import Any, Callable, List, Optional, Sequence

logger = logging.getLogger('kn.parallel')


async def _evaluate_all(
    tasks: Sequence[Callable[[], Any]],
    labels: Sequence[str],
    threads: int,
) -> List[Optional[Any]]:
    semaphore = asyncio.Semaphore(max(1, threads))

    async def run(task: Callable[[], Any]) -> Any:
        async with semaphore:
            return await asyncio.to_thread(task)

    responses = await asyncio.gather(*[run(task) for task in tasks], return_exceptions=True)

    processed: List[Optional[Any]] = []
    for label, resp in zip(labels, responses):
        if isinstance(resp, Exception):
            logger.error(f"  ✗ {label} EXCEPTION: {type(resp).__name__}: {resp}")
            processed.append(None)
        else:
            processed.append(resp)

    success_count = sum(1 for r in processed if r is not None)
    logger.debug(f"parallel evaluation complete: {success_count}/{len(tasks)} succeeded")
    return processed


def evaluate_parallel(
    tasks: Sequence[Callable[[], Any]],
    threads: int = 1,
    labels: Optional[Sequence[str]] = None,
) -> List[Optional[Any]]:
    """
    Run independent callables on a thread pool and keep their order.

    Args:
        tasks: Zero-argument callables
        threads: Maximum number of tasks running at once
        labels: Names used when logging failures

    Returns:
        Results in task order, None where a task raised
    """
    labels = list(labels) if labels is not None else [f"task {k}" for k in range(len(tasks))]
    if threads <= 1:
        results: List[Optional[Any]] = []
        for label, task in zip(labels, tasks):
            try:
                results.append(task())
            except Exception as e:
                logger.error(f"  ✗ {label} EXCEPTION: {type(e).__name__}: {e}")
                results.append(None)
        return results
    return asyncio.run(_evaluate_all(tasks, labels, threads))
