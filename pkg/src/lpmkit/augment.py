"""Angle-coordinate lifts for closed and self-intersecting manifolds.

A closed curve in R^2 becomes an open arc in R^3 once its polar angle is
appended; a closed surface in R^3 opens up in R^5 with its two spherical
angles. Fits run on the lifted points, and the angle coordinates are
dropped afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from lpmkit._errors import DegenerateInputError
from lpmkit.core import SplineModel

if TYPE_CHECKING:
    from lpmkit._types import FloatArray, LiftMode

logger = logging.getLogger(__name__)

POLE_TOL = 1e-12
_AMBIENT = {"polar": 2, "spherical": 3}


@dataclass(frozen=True, slots=True)
class LiftSpec:
    """How to lift a cloud.

    Attributes:
        mode: "polar" (R^2 -> R^3) or "spherical" (R^3 -> R^5).
        scale: Positive factor applied to each appended angle.
        center: Angular origin (None = centroid of the lifted cloud).
    """

    mode: LiftMode
    scale: float = 1.0
    center: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.mode not in _AMBIENT:
            msg = f"mode must be 'polar' or 'spherical', got {self.mode!r}"
            raise ValueError(msg)
        if not self.scale > 0 or not np.isfinite(self.scale):
            msg = f"scale must be > 0, got {self.scale}"
            raise ValueError(msg)
        if self.center is not None:
            center = tuple(float(c) for c in self.center)
            if len(center) != self.ambient_dim:
                msg = f"center must have {self.ambient_dim} coordinates, got {len(center)}"
                raise ValueError(msg)
            if not all(np.isfinite(center)):
                msg = "center must be finite"
                raise ValueError(msg)
            object.__setattr__(self, "center", center)

    @property
    def ambient_dim(self) -> int:
        return _AMBIENT[self.mode]

    @property
    def added_dims(self) -> int:
        return 1 if self.mode == "polar" else 2

    @classmethod
    def about_centroid(cls, points: Any, mode: LiftMode, scale: float = 1.0) -> LiftSpec:
        """Spec whose angular origin is the cloud centroid."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return cls(mode, scale, tuple(float(c) for c in pts.mean(axis=0)))


def lift(points: Any, spec: LiftSpec) -> FloatArray:
    """Append scaled angle coordinates about ``spec.center``.

    polar: c·atan2(y, x) in c·(-π, π]. spherical: c·θ with θ in [0, π] and
    c·φ with φ in (-π, π]; φ is 0 at the poles.

    Raises:
        ValueError: If the point dimension does not match the mode.
        DegenerateInputError: If a point coincides with the center.
    """
    pts = np.asarray(points, dtype=np.float64)
    pts = pts.reshape(0, spec.ambient_dim) if pts.size == 0 else np.atleast_2d(pts)
    if pts.shape[1] != spec.ambient_dim:
        msg = f"{spec.mode} lift needs points in R^{spec.ambient_dim}, got R^{pts.shape[1]}"
        raise ValueError(msg)
    if pts.shape[0] == 0:
        return np.empty((0, spec.ambient_dim + spec.added_dims))
    center = pts.mean(axis=0) if spec.center is None else np.asarray(spec.center)
    rel = pts - center
    radius = np.linalg.norm(rel, axis=1)
    if np.any(radius == 0.0):
        msg = "undefined angle: a point coincides with the lift center"
        raise DegenerateInputError(msg)

    if spec.mode == "polar":
        angles = _half_open(np.arctan2(rel[:, 1], rel[:, 0]))[:, None]
    else:
        theta = np.arccos(np.clip(rel[:, 2] / radius, -1.0, 1.0))
        phi = _half_open(np.arctan2(rel[:, 1], rel[:, 0]))
        phi = np.where(np.sin(theta) < POLE_TOL, 0.0, phi)
        angles = np.column_stack([theta, phi])
    logger.debug("lifted %d points (%s, scale %g)", pts.shape[0], spec.mode, spec.scale)
    return np.hstack([pts, spec.scale * angles])


def _half_open(angle: FloatArray) -> FloatArray:
    """Map atan2 output onto (-π, π]."""
    return np.where(angle <= -np.pi, angle + 2.0 * np.pi, angle)


def drop(points: Any, original_dim: int) -> FloatArray:
    """Keep the first ``original_dim`` coordinates of every point.

    Raises:
        ValueError: If the points are not longer than ``original_dim``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.empty((0, original_dim))
    pts = np.atleast_2d(pts)
    if pts.shape[1] <= original_dim:
        msg = f"points have {pts.shape[1]} coordinates; cannot drop to {original_dim}"
        raise ValueError(msg)
    return pts[:, :original_dim].copy()


def drop_model(model: SplineModel, original_dim: int) -> SplineModel:
    """The spline restricted to its first ``original_dim`` output coordinates."""
    if model.D <= original_dim:
        msg = f"model has {model.D} outputs; cannot drop to {original_dim}"
        raise ValueError(msg)
    return SplineModel(model.knots, model.s[:, :original_dim], model.alpha[:, :original_dim])


@dataclass(frozen=True, slots=True)
class Standardization:
    """Affine map applied by :func:`standardize`."""

    mean: FloatArray
    scale: FloatArray

    def apply(self, points: Any) -> FloatArray:
        return (np.asarray(points, dtype=np.float64) - self.mean) / self.scale

    def invert(self, points: Any) -> FloatArray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.mean


def standardize(points: Any) -> tuple[FloatArray, Standardization]:
    """Center each coordinate and scale it so max |value| = 1.

    Constant coordinates are centered only.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    mean = pts.mean(axis=0)
    centered = pts - mean
    scale = np.max(np.abs(centered), axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    transform = Standardization(mean, scale)
    return centered / scale, transform
