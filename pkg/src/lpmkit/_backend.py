"""Executor backends used to fan out independent fits.

Per-time reductions, per-λ fits, per-γ cross-validation and factorial
combinations are independent tasks; they run on one of these backends.
"""

from __future__ import annotations

import multiprocessing as mp
import sys
from concurrent.futures import Future, ProcessPoolExecutor, ThreadPoolExecutor
from typing import TYPE_CHECKING, Any, Protocol, TypeVar

from lpmkit._detection import recommended_backend
from lpmkit._errors import ConfigError

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator
    from concurrent.futures import Executor

    from lpmkit._types import BackendType

R = TypeVar("R")
B = TypeVar("B", bound="_PoolBackend")


class Backend(Protocol):
    """What :func:`lpmkit._parallel.pmap` needs from a pool."""

    def map(self, fn: Callable[..., R], items: Iterator[Any]) -> Iterator[R]: ...

    def submit(self, fn: Callable[..., R], *args: Any) -> Future[R]: ...

    def shutdown(self, *, wait: bool = True) -> None: ...


class _PoolBackend:
    """Thin wrapper over a concurrent.futures executor."""

    _executor: Executor

    def __init__(self, workers: int) -> None:
        self.workers = workers

    def map(self, fn: Callable[..., R], items: Iterator[Any]) -> Iterator[R]:
        """Ordered results; the first task exception surfaces on iteration."""
        return self._executor.map(fn, items)

    def submit(self, fn: Callable[..., R], *args: Any) -> Future[R]:
        return self._executor.submit(fn, *args)

    def shutdown(self, *, wait: bool = True) -> None:
        self._executor.shutdown(wait=wait)

    def __enter__(self: B) -> B:
        return self

    def __exit__(self, *exc: Any) -> None:
        self.shutdown()


class ThreadBackend(_PoolBackend):
    """Threads; numpy and scipy drop the GIL inside their dense kernels."""

    def __init__(self, workers: int) -> None:
        super().__init__(workers)
        self._executor = ThreadPoolExecutor(
            max_workers=workers, thread_name_prefix="lpmkit"
        )


def _get_mp_context() -> mp.context.BaseContext | None:
    # fork keeps scripts working without an `if __name__ == "__main__"` guard
    if sys.platform == "win32":
        return None
    return mp.get_context("fork")


class ProcessBackend(_PoolBackend):
    """Processes; the task function and its arguments must pickle."""

    def __init__(self, workers: int) -> None:
        super().__init__(workers)
        self._executor = ProcessPoolExecutor(
            max_workers=workers, mp_context=_get_mp_context()
        )


def create_backend(backend_type: BackendType, workers: int) -> ThreadBackend | ProcessBackend:
    """Build the pool named by ``backend_type``; "auto" asks the runtime.

    Raises:
        ConfigError: If the backend type is unknown.
    """
    kind: str = recommended_backend() if backend_type == "auto" else backend_type
    if kind == "thread":
        return ThreadBackend(workers)
    if kind == "process":
        return ProcessBackend(workers)
    msg = f"Unknown backend type: {backend_type!r}"
    raise ConfigError(msg)
