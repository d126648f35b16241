"""Runtime detection: GIL state and the default thread budget.

The worker budget for library calls is resolved in this order:
an explicit ``workers`` argument, the ``LPMKIT_THREADS`` environment
variable, then the CPU count (capped at 32).
"""

from __future__ import annotations

import logging
import os
import sys
import sysconfig
from functools import lru_cache

logger = logging.getLogger(__name__)

THREADS_ENV = "LPMKIT_THREADS"
_MAX_WORKERS = 32


@lru_cache(maxsize=1)
def is_gil_disabled() -> bool:
    """Return True on a free-threaded interpreter (3.13t+)."""
    is_gil_enabled = getattr(sys, "_is_gil_enabled", None)
    if is_gil_enabled is not None:
        return not is_gil_enabled()

    gil_disabled = sysconfig.get_config_var("Py_GIL_DISABLED")
    if gil_disabled is not None:
        return bool(int(gil_disabled))

    return False


def recommended_backend() -> str:
    """Return "thread" when threads run truly parallel, else "process"."""
    return "thread" if is_gil_disabled() else "process"


def default_workers() -> int:
    """Worker budget from ``LPMKIT_THREADS`` or the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        else:
            if value >= 1:
                return value
            logger.warning("ignoring %s=%r (must be >= 1)", THREADS_ENV, raw)
    cpu = os.cpu_count()
    return min(cpu, _MAX_WORKERS) if cpu else 4
