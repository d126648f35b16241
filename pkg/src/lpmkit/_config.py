"""Settings dataclasses and config-file loading.

All settings are immutable and validated on construction. The CLI layers
them as: command-line flag > config file > default.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from lpmkit._errors import ConfigError

if TYPE_CHECKING:
    from collections.abc import Mapping
    from pathlib import Path

    from lpmkit._types import BackendType

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


def exp_grid(lo: int, hi: int) -> tuple[float, ...]:
    """Return (e^lo, e^(lo+1), ..., e^hi)."""
    return tuple(math.exp(g) for g in range(lo, hi + 1))


DEFAULT_LAMBDA_GRID = exp_grid(-15, 5)
DEFAULT_GAMMA_GRID = exp_grid(-10, 10)


@dataclass(frozen=True, slots=True)
class ReduceSettings:
    """Settings for mixture-center reduction of one cloud.

    Attributes:
        n0: Minimum number of components. None means 10·d.
        alpha: Level of the sequential z-test.
        eps: Relative log-likelihood tolerance for the weight EM.
        max_components: Cap on components. None means 10·d + 100.
        lloyd_iter: Maximum Lloyd refinement iterations.
        em_iter: Maximum EM iterations over the weights.
    """

    n0: int | None = None
    alpha: float = 0.05
    eps: float = 1e-3
    max_components: int | None = None
    lloyd_iter: int = 100
    em_iter: int = 500

    def __post_init__(self) -> None:
        if self.n0 is not None and self.n0 < 1:
            msg = f"n0 must be >= 1, got {self.n0}"
            raise ValueError(msg)
        if not 0.0 < self.alpha < 1.0:
            msg = f"alpha must be in (0, 1), got {self.alpha}"
            raise ValueError(msg)
        if not 0.0 < self.eps < 1.0:
            msg = f"eps must be in (0, 1), got {self.eps}"
            raise ValueError(msg)
        if self.max_components is not None and self.max_components < 1:
            msg = f"max_components must be >= 1, got {self.max_components}"
            raise ValueError(msg)
        if self.lloyd_iter < 1 or self.em_iter < 1:
            msg = "lloyd_iter and em_iter must be >= 1"
            raise ValueError(msg)

    def resolved_n0(self, d: int) -> int:
        return self.n0 if self.n0 is not None else 10 * d

    def resolved_max_components(self, d: int) -> int:
        return self.max_components if self.max_components is not None else 10 * d + 100


@dataclass(frozen=True, slots=True)
class PmeSettings:
    """Settings for one principal manifold fit.

    Attributes:
        lambda_grid: Candidate roughness penalties.
        eps: Relative tolerance on the weighted center objective.
        itr: Maximum projection/refit iterations per λ.
        projection_starts: Best seeds refined per projected point
            (None = every seed).
        neighbors: Isomap neighbour count (None = heuristic default).
        reduce: Settings for the mixture reduction step.
    """

    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    eps: float = 1e-3
    itr: int = 100
    projection_starts: int | None = 4
    neighbors: int | None = None
    reduce: ReduceSettings = field(default_factory=ReduceSettings)

    def __post_init__(self) -> None:
        if not self.lambda_grid:
            msg = "lambda_grid must be nonempty"
            raise ValueError(msg)
        if any(lam < 0 or not math.isfinite(lam) for lam in self.lambda_grid):
            msg = f"lambda_grid must hold finite values >= 0, got {self.lambda_grid}"
            raise ValueError(msg)
        if not 0.0 < self.eps < 1.0:
            msg = f"eps must be in (0, 1), got {self.eps}"
            raise ValueError(msg)
        if self.itr < 1:
            msg = f"itr must be >= 1, got {self.itr}"
            raise ValueError(msg)
        if self.projection_starts is not None and self.projection_starts < 1:
            msg = f"projection_starts must be >= 1, got {self.projection_starts}"
            raise ValueError(msg)


@dataclass(frozen=True, slots=True)
class LpmeSettings:
    """Settings for the longitudinal pipeline.

    Attributes:
        pme: Per-time fit settings.
        gamma_grid: Candidate temporal smoothing values for tuning.
        gamma: Fixed γ; skips tuning when set.
        cv_folds: None for leave-one-out, k for k-fold over time indices.
        grid_size: Override for the shared knot count per parameter axis.
        workers: Parallel workers (0 = auto).
        backend: Executor backend for per-time and per-γ fan-out.
        seed: Master seed for the mixture reductions.
    """

    pme: PmeSettings = field(default_factory=PmeSettings)
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    gamma: float | None = None
    cv_folds: int | None = None
    grid_size: int | None = None
    workers: int = 0
    backend: BackendType = "thread"
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.gamma_grid:
            msg = "gamma_grid must be nonempty"
            raise ValueError(msg)
        if any(g < 0 or not math.isfinite(g) for g in self.gamma_grid):
            msg = f"gamma_grid must hold finite values >= 0, got {self.gamma_grid}"
            raise ValueError(msg)
        if self.gamma is not None and (self.gamma < 0 or not math.isfinite(self.gamma)):
            msg = f"gamma must be finite and >= 0, got {self.gamma}"
            raise ValueError(msg)
        if self.cv_folds is not None and self.cv_folds < 2:
            msg = f"cv_folds must be >= 2, got {self.cv_folds}"
            raise ValueError(msg)
        if self.grid_size is not None and self.grid_size < 3:
            msg = f"grid_size must be >= 3, got {self.grid_size}"
            raise ValueError(msg)
        if self.workers < 0:
            msg = f"workers must be >= 0, got {self.workers}"
            raise ValueError(msg)


def load_config_file(path: Path) -> dict[str, dict[str, Any]]:
    """Read a TOML config file whose tables are named after subcommands."""
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        msg = f"cannot read config file {path}: {exc}"
        raise ConfigError(msg) from exc
    except tomllib.TOMLDecodeError as exc:
        msg = f"invalid config file {path}: {exc}"
        raise ConfigError(msg) from exc
    for key, value in raw.items():
        if not isinstance(value, dict):
            msg = f"config key {key!r} must be a table named after a subcommand"
            raise ConfigError(msg)
    return raw


def merge_layers(
    defaults: Mapping[str, Any],
    file_values: Mapping[str, Any],
    flags: Mapping[str, Any],
) -> dict[str, Any]:
    """Combine config layers: flags (non-None) > file > defaults.

    Raises:
        ConfigError: If the file names a key absent from the defaults.
    """
    unknown = sorted(set(file_values) - set(defaults))
    if unknown:
        msg = f"unknown config keys: {', '.join(unknown)}"
        raise ConfigError(msg)
    merged = dict(defaults)
    merged.update(file_values)
    merged.update({k: v for k, v in flags.items() if v is not None and k in defaults})
    return merged

