"""Shared domain types, the thin-plate kernel, and spline evaluation.

A fitted manifold at one time point is a thin-plate spline

    f_l(r) = sum_j s[j, l] * eta(d, |r - knot_j|) + sum_k alpha[k, l] * p_k(r)

with p = (1, r_1, ..., r_d). Every other module builds on these pieces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.spatial.distance import cdist, pdist

from lpmkit._errors import DegenerateInputError

if TYPE_CHECKING:
    from lpmkit._types import FloatArray
    from lpmkit.lpme import TemporalSpline

logger = logging.getLogger(__name__)

MAX_INTRINSIC_DIM = 3


def _frozen(values: Any, ndim: int, name: str) -> FloatArray:
    arr = np.array(values, dtype=np.float64, copy=True, ndmin=ndim)
    if arr.ndim != ndim:
        msg = f"{name} must be {ndim}-dimensional, got shape {arr.shape}"
        raise ValueError(msg)
    if not np.all(np.isfinite(arr)):
        msg = f"{name} must be finite"
        raise ValueError(msg)
    arr.flags.writeable = False
    return arr


def _check_dim(d: int) -> None:
    if d < 1:
        msg = f"intrinsic dimension must be >= 1, got {d}"
        raise ValueError(msg)
    if d > MAX_INTRINSIC_DIM:
        msg = f"thin-plate kernel is undefined for d >= 4, got d={d}"
        raise ValueError(msg)


def eta_kernel(d: int, r: Any) -> Any:
    """Thin-plate radial kernel.

    r^(4-d)·log r for even d, r^(4-d) for odd d, and 0 at r = 0.
    Accepts scalars or arrays; returns the same shape.

    Raises:
        ValueError: If d is outside 1..3 or any r is negative.
    """
    _check_dim(d)
    arr = np.asarray(r, dtype=np.float64)
    if np.any(arr < 0):
        msg = "eta_kernel is defined for r >= 0 only"
        raise ValueError(msg)
    power = 4 - d
    if d % 2 == 1:
        out = arr**power
    else:
        safe = np.where(arr > 0, arr, 1.0)
        out = np.where(arr > 0, safe**power * np.log(safe), 0.0)
    return float(out) if out.ndim == 0 else out


def eta_gradient_factor(d: int, rho: FloatArray) -> FloatArray:
    """Scalar g(rho) with grad_r eta(d, |r - k|) = g(rho) * (r - k).

    The d=3 kernel is not differentiable at the knot; the factor is set to 0
    there, as it is for the other dimensions.
    """
    _check_dim(d)
    positive = rho > 0
    safe = np.where(positive, rho, 1.0)
    if d == 1:
        return 3.0 * rho
    if d == 2:
        return np.where(positive, 2.0 * np.log(safe) + 1.0, 0.0)
    return np.where(positive, 1.0 / safe, 0.0)


def poly_basis(d: int, r: Any) -> FloatArray:
    """Linear polynomial basis (1, r_1, ..., r_d).

    A single point (shape (d,)) gives shape (d+1,); a batch (m, d) gives
    (m, d+1).
    """
    arr = np.asarray(r, dtype=np.float64)
    single = arr.ndim <= 1
    batch = np.atleast_2d(arr.reshape(1, -1) if single else arr)
    if batch.shape[1] != d:
        msg = f"point must have {d} coordinates, got {batch.shape[1]}"
        raise ValueError(msg)
    out = np.hstack([np.ones((batch.shape[0], 1)), batch])
    return out[0] if single else out


@dataclass(frozen=True, slots=True)
class SplineModel:
    """One time point's fitted embedding f: R^d -> R^D.

    Attributes:
        knots: (N, d) parameter points, pairwise distinct.
        s: (N, D) kernel coefficients.
        alpha: (d+1, D) polynomial coefficients.
    """

    knots: FloatArray
    s: FloatArray
    alpha: FloatArray

    def __post_init__(self) -> None:
        knots = _frozen(self.knots, 2, "knots")
        s = _frozen(self.s, 2, "s")
        alpha = _frozen(self.alpha, 2, "alpha")
        n, d = knots.shape
        _check_dim(d)
        if s.shape[0] != n:
            msg = f"s must have {n} rows (one per knot), got {s.shape[0]}"
            raise ValueError(msg)
        if alpha.shape != (d + 1, s.shape[1]):
            msg = f"alpha must have shape {(d + 1, s.shape[1])}, got {alpha.shape}"
            raise ValueError(msg)
        if n > 1 and float(np.min(pdist(knots))) <= 0.0:
            msg = "knots must be pairwise distinct"
            raise DegenerateInputError(msg)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "alpha", alpha)

    @property
    def d(self) -> int:
        return int(self.knots.shape[1])

    @property
    def D(self) -> int:  # noqa: N802
        return int(self.s.shape[1])

    @property
    def n_knots(self) -> int:
        return int(self.knots.shape[0])

    def evaluate(self, r: Any) -> FloatArray:
        return eval_spline(self, r)

    def jacobian(self, r: Any) -> FloatArray:
        return spline_jacobian(self, r)

    def scaled(self, factor: float) -> SplineModel:
        """Model with every coefficient multiplied by ``factor``."""
        return SplineModel(self.knots, factor * self.s, factor * self.alpha)


def eval_spline(model: SplineModel, r: Any) -> FloatArray:
    """Evaluate the spline at one parameter (d,) or a batch (m, d)."""
    arr = np.asarray(r, dtype=np.float64)
    single = arr.ndim <= 1
    batch = arr.reshape(1, -1) if single else arr
    kernel = eta_kernel(model.d, cdist(batch, model.knots))
    out = kernel @ model.s + poly_basis(model.d, batch) @ model.alpha
    return out[0] if single else out


def spline_jacobian(model: SplineModel, r: Any) -> FloatArray:
    """Jacobian df/dr at a batch of parameters, shape (m, D, d)."""
    batch = np.atleast_2d(np.asarray(r, dtype=np.float64))
    diff = batch[:, None, :] - model.knots[None, :, :]
    rho = np.sqrt(np.sum(diff**2, axis=2))
    factor = eta_gradient_factor(model.d, rho)
    jac = np.einsum("mn,nl,mnk->mlk", factor, model.s, diff)
    return jac + model.alpha[1:].T[None, :, :]


def orthogonality_residual(model: SplineModel) -> float:
    """max |R s| relative to the largest |s| entry (0 when s is zero)."""
    moments = poly_basis(model.d, model.knots).T @ model.s
    scale = float(np.max(np.abs(model.s))) if model.s.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(moments))) / scale


def flatten_coefficients(model: SplineModel) -> FloatArray:
    """b = (s row-major, alpha row-major) of length (N + d + 1)·D."""
    return np.concatenate([model.s.ravel(), model.alpha.ravel()])


def unflatten_coefficients(
    b: FloatArray, knots: FloatArray, D: int  # noqa: N803
) -> SplineModel:
    """Inverse of :func:`flatten_coefficients` on a given knot set."""
    n, d = knots.shape
    expected = (n + d + 1) * D
    if b.shape != (expected,):
        msg = f"coefficient vector must have length {expected}, got {b.shape}"
        raise ValueError(msg)
    s = b[: n * D].reshape(n, D)
    alpha = b[n * D :].reshape(d + 1, D)
    return SplineModel(knots, s, alpha)


@dataclass(frozen=True, slots=True)
class LongitudinalCloud:
    """Point clouds observed at an increasing series of time points.

    Attributes:
        times: (T,) strictly increasing time stamps, T >= 2.
        clouds: One (I_t, D) array per time point, I_t >= 1.
        d: Intrinsic dimension, 1 <= d < D.
    """

    times: FloatArray
    clouds: tuple[FloatArray, ...]
    d: int

    def __post_init__(self) -> None:
        times = _frozen(self.times, 1, "times")
        if times.shape[0] < 2:
            msg = f"need >= 2 time points, got {times.shape[0]}"
            raise ValueError(msg)
        if np.any(np.diff(times) <= 0):
            msg = "times must be strictly increasing"
            raise DegenerateInputError(msg)
        if len(self.clouds) != times.shape[0]:
            msg = f"expected {times.shape[0]} clouds, got {len(self.clouds)}"
            raise ValueError(msg)
        clouds = tuple(_frozen(c, 2, f"cloud {i}") for i, c in enumerate(self.clouds))
        dims = {c.shape[1] for c in clouds}
        if len(dims) != 1:
            msg = f"every point must have the same dimension, got {sorted(dims)}"
            raise ValueError(msg)
        if any(c.shape[0] < 1 for c in clouds):
            msg = "every time point needs at least one observation"
            raise ValueError(msg)
        big_d = dims.pop()
        if not 1 <= self.d < big_d:
            msg = f"need 1 <= d < D, got d={self.d}, D={big_d}"
            raise ValueError(msg)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "clouds", clouds)

    @property
    def D(self) -> int:  # noqa: N802
        return int(self.clouds[0].shape[1])

    @property
    def T(self) -> int:  # noqa: N802
        return int(self.times.shape[0])

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(c.shape[0]) for c in self.clouds)

    def subset(self, indices: Any) -> LongitudinalCloud:
        idx = [int(i) for i in indices]
        return LongitudinalCloud(
            self.times[idx], tuple(self.clouds[i] for i in idx), self.d
        )


@dataclass(frozen=True, slots=True)
class LongitudinalModel:
    """Final longitudinal fit: a temporal spline over grid coefficients.

    Attributes:
        grid: (N*, d) shared knots.
        coefficients: (T, M) comparable coefficients b_t, M = (N*+d+1)·D.
        times: (T,) observation times.
        tau: (T,) per-time data MSD of the individual fits.
        weights: (T,) normalized inverse errors, summing to 1.
        lambdas: (T,) per-time selected roughness penalties.
        gamma_star: Temporal smoothing value in use.
        temporal_spline: The fitted g_gamma.
        msd_table: (gamma, MSD) pairs from tuning; NaN marks invalid gammas.
    """

    grid: FloatArray
    coefficients: FloatArray
    times: FloatArray
    tau: FloatArray
    weights: FloatArray
    lambdas: FloatArray
    gamma_star: float
    temporal_spline: TemporalSpline
    msd_table: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self) -> None:
        for name, ndim in (
            ("grid", 2),
            ("coefficients", 2),
            ("times", 1),
            ("tau", 1),
            ("weights", 1),
            ("lambdas", 1),
        ):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim, name))
        if np.any(self.weights <= 0):
            msg = "weights must be positive"
            raise ValueError(msg)
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            msg = f"weights must sum to 1, got {float(np.sum(self.weights))!r}"
            raise ValueError(msg)

    @property
    def d(self) -> int:
        return int(self.grid.shape[1])

    @property
    def D(self) -> int:  # noqa: N802
        n, d = self.grid.shape
        return int(self.coefficients.shape[1] // (n + d + 1))

    def spline_at(self, t: float) -> SplineModel:
        """The time-t spline whose coefficients are g_gamma(t)."""
        b = self.temporal_spline.evaluate(t)
        return unflatten_coefficients(b, self.grid, self.D)

    def is_extrapolated(self, t: float) -> bool:
        return bool(t < self.times[0] or t > self.times[-1])
