"""Type aliases and result wrappers for lpmkit."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Generic, Literal, TypeVar

import numpy as np
import numpy.typing as npt

T = TypeVar("T")

FloatArray = npt.NDArray[np.float64]

BackendType = Literal["auto", "thread", "process"]
ErrorStrategy = Literal["raise", "collect"]
ChangeModel = Literal["constant", "linear", "quadratic", "sinusoidal"]
LiftMode = Literal["polar", "spherical"]

ProgressType = bool | str

CHANGE_MODELS: tuple[ChangeModel, ...] = ("constant", "linear", "quadratic", "sinusoidal")


@dataclass(frozen=True, slots=True)
class Ok(Generic[T]):
    """A task that returned ``value``."""

    value: T

    def is_ok(self) -> bool:
        return True

    def is_err(self) -> bool:
        return False

    def unwrap(self) -> T:
        return self.value

    def __repr__(self) -> str:
        return f"Ok({self.value!r})"


@dataclass(frozen=True, slots=True, eq=False)
class Err:
    """A task that raised; equal when type and message match."""

    exception: BaseException

    def is_ok(self) -> bool:
        return False

    def is_err(self) -> bool:
        return True

    def unwrap(self) -> Any:
        raise self.exception

    def _key(self) -> tuple[type, str]:
        return type(self.exception), str(self.exception)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Err):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())


Result = Ok[T] | Err
