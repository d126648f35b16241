"""lpmkit: longitudinal principal manifold estimation.

Usage:
    >>> from lpmkit import LongitudinalCloud, fit_lpme
    >>> model = fit_lpme(LongitudinalCloud(times, clouds, d=1))
    >>> model.spline_at(0.5).evaluate(r)
"""

from __future__ import annotations

import logging

from lpmkit._config import LpmeSettings, PmeSettings, ReduceSettings
from lpmkit._errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    LpmkitError,
    LpmkitWarning,
    SolverError,
    StageError,
    WatertightError,
)
from lpmkit._types import Err, Ok, Result
from lpmkit.augment import LiftSpec, drop, lift
from lpmkit.core import LongitudinalCloud, LongitudinalModel, SplineModel
from lpmkit.lpme import embed, estimate_volume, fit_lpme
from lpmkit.pme import fit_pme, fit_pme_cloud, project

try:
    from lpmkit._version import __version__
except ImportError:  # pragma: no cover
    __version__ = "0.0.0.dev0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "Err",
    "FormatError",
    "LiftSpec",
    "LongitudinalCloud",
    "LongitudinalModel",
    "LpmeSettings",
    "LpmkitError",
    "LpmkitWarning",
    "Ok",
    "PmeSettings",
    "ReduceSettings",
    "Result",
    "SolverError",
    "SplineModel",
    "StageError",
    "WatertightError",
    "__version__",
    "drop",
    "embed",
    "estimate_volume",
    "fit_lpme",
    "fit_pme",
    "fit_pme_cloud",
    "lift",
    "project",
]
