"""Order-preserving parallel map used by every fan-out in lpmkit.

Tasks are independent fits (one time point, one λ, one γ, one factorial
combination). Results always come back in input order, so outputs never
depend on scheduling.
"""

from __future__ import annotations

import functools
import logging
from typing import TYPE_CHECKING, Any, TypeVar

from lpmkit._backend import create_backend
from lpmkit._detection import default_workers
from lpmkit._types import BackendType, Err, ErrorStrategy, Ok, ProgressType

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

    from lpmkit._backend import Backend

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def resolve_workers(workers: int, n_items: int) -> int:
    """Compute the worker count for a batch of tasks.

    An explicit positive ``workers`` wins; otherwise the budget comes from
    ``LPMKIT_THREADS`` or the CPU count. Never more workers than items.
    """
    budget = workers if workers > 0 else default_workers()
    return min(budget, max(1, n_items))


def resolve_progress(progress: ProgressType) -> tuple[bool, str | None]:
    """Split the progress flag into (enabled, description)."""
    if progress is False:
        return (False, None)
    if progress is True:
        return (True, None)
    return (True, str(progress))


def make_progress_bar(total: int, desc: str | None) -> Any:
    """Create a tqdm bar on stderr; tqdm is an optional dependency.

    Raises:
        ImportError: If tqdm is not installed.
    """
    try:
        from tqdm.auto import tqdm
    except ImportError:
        msg = (
            "tqdm is required for progress display. "
            "Install it with: pip install lpmkit[progress]"
        )
        raise ImportError(msg) from None

    return tqdm(total=total, desc=desc, leave=False)


def pmap(
    fn: Callable[[T], R],
    items: Iterable[T],
    *,
    workers: int = 0,
    backend: BackendType = "thread",
    on_error: ErrorStrategy = "raise",
    progress: ProgressType = False,
) -> list[Any]:
    """Parallel map: apply fn to each item and return results in order.

    Args:
        fn: Function to apply to each item. Must be picklable for the
            process backend.
        items: Input items.
        workers: Number of parallel workers (0 = auto). A value of 1 runs
            serially in the calling thread.
        backend: "auto", "thread", or "process".
        on_error: "raise" (first failure propagates) or "collect" (return
            Ok/Err wrappers).
        progress: Enable a tqdm progress bar; a string sets its description.

    Returns:
        Results in input order (Ok/Err wrappers when on_error="collect").
    """
    item_list = list(items)
    if not item_list:
        return []

    n_workers = resolve_workers(workers, len(item_list))
    enabled, desc = resolve_progress(progress)
    pbar = make_progress_bar(len(item_list), desc) if enabled else None

    try:
        if n_workers == 1:
            return _run_serial(fn, item_list, on_error, pbar)
        be = create_backend(backend, n_workers)
        try:
            return _run_pooled(fn, item_list, on_error, be, pbar)
        finally:
            be.shutdown(wait=True)
    finally:
        if pbar is not None:
            pbar.close()


def _settle(
    call: Callable[[], R], index: int, on_error: ErrorStrategy, out: list[Any]
) -> None:
    """Run one task and append its outcome as the strategy dictates."""
    try:
        value = call()
    except Exception as exc:
        if on_error == "raise":
            raise
        out.append(Err(exc))
        logger.debug("task %d failed: %s", index, exc)
    else:
        out.append(Ok(value) if on_error == "collect" else value)


def _run_serial(
    fn: Callable[[T], R],
    items: list[T],
    on_error: ErrorStrategy,
    progress_bar: Any,
) -> list[Any]:
    out: list[Any] = []
    for i, item in enumerate(items):
        try:
            _settle(functools.partial(fn, item), i, on_error, out)
        finally:
            if progress_bar is not None:
                progress_bar.update(1)
    return out


def _run_pooled(
    fn: Callable[[T], R],
    items: list[T],
    on_error: ErrorStrategy,
    pool: Backend,
    progress_bar: Any,
) -> list[Any]:
    if progress_bar is None and on_error == "raise":
        return list(pool.map(fn, iter(items)))

    futures = [pool.submit(fn, item) for item in items]
    out: list[Any] = []
    # waiting in submission order keeps results aligned with items
    for i, future in enumerate(futures):
        try:
            _settle(future.result, i, on_error, out)
        except Exception:
            for pending in futures[i + 1 :]:
                pending.cancel()
            raise
        finally:
            if progress_bar is not None:
                progress_bar.update(1)
    return out
