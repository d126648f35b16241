"""Longitudinal principal manifold estimation.

The pipeline, per :func:`fit_lpme`:

1. reduce every cloud to weighted mixture centers;
2. fit PME at the first time and project later centers onto it to get
   starting parameters;
3. fit PME at every time;
4. re-express every fit on one shared knot grid (comparable coefficients);
5. smooth the coefficient vectors over time with a weighted cubic spline,
   choosing gamma by leave-one-out (or k-fold) cross-validation.
"""

from __future__ import annotations

import functools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import linalg, stats

from lpmkit import _mesh
from lpmkit._config import LpmeSettings
from lpmkit._errors import (
    ConfigError,
    DegenerateInputError,
    LpmkitError,
    LpmkitWarning,
    SolverError,
    StageError,
)
from lpmkit._parallel import pmap
from lpmkit.core import (
    LongitudinalModel,
    _frozen,
    flatten_coefficients,
    unflatten_coefficients,
)
from lpmkit.init import isomap_embed
from lpmkit.pme import fit_pme, msd, project_many, solve_penalized_spline
from lpmkit.reduce import reduce_longitudinal

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from lpmkit._config import PmeSettings
    from lpmkit._types import BackendType, FloatArray
    from lpmkit.augment import LiftSpec
    from lpmkit.core import LongitudinalCloud
    from lpmkit.pme import PmeFit
    from lpmkit.reduce import ReducedCloud

logger = logging.getLogger(__name__)

TAU_FLOOR = 1e-12
SIDE_CONDITION_TOL = 1e-8
MIN_TUNING_TIMES = 4


# ---------------------------------------------------------------------------
# Temporal spline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TemporalSpline:
    """Weighted natural cubic spline g(t) over coefficient vectors.

    g(t) = sum_i delta_i |t - t_i|^3 + nu_0 + nu_1 t, with T^T delta = 0.

    Attributes:
        times: (T,) knots.
        delta: (T, M) cubic coefficients.
        nu: (2, M) linear coefficients.
        gamma: Smoothing value.
        weights: (T,) normalized inverse errors.
    """

    times: FloatArray
    delta: FloatArray
    nu: FloatArray
    gamma: float
    weights: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _frozen(self.times, 1, "times"))
        object.__setattr__(self, "delta", _frozen(self.delta, 2, "delta"))
        object.__setattr__(self, "nu", _frozen(self.nu, 2, "nu"))
        object.__setattr__(self, "weights", _frozen(self.weights, 1, "weights"))
        if self.nu.shape != (2, self.delta.shape[1]):
            msg = f"nu must have shape {(2, self.delta.shape[1])}, got {self.nu.shape}"
            raise ValueError(msg)

    @property
    def width(self) -> int:
        return int(self.delta.shape[1])

    def evaluate(self, t: Any) -> FloatArray:
        """g(t) for a scalar (shape (M,)) or a batch of times (shape (k, M))."""
        arr = np.asarray(t, dtype=np.float64)
        scalar = arr.ndim == 0
        ts = arr.reshape(-1)
        cubic = np.abs(ts[:, None] - self.times[None, :]) ** 3
        out = cubic @ self.delta + self.nu[0][None, :] + ts[:, None] * self.nu[1][None, :]
        return out[0] if scalar else out

    def roughness(self) -> float:
        """delta^T A delta, summed over coefficient columns."""
        cubic = np.abs(self.times[:, None] - self.times[None, :]) ** 3
        return float(np.einsum("im,ij,jm->", self.delta, cubic, self.delta))


def inverse_error_weights(tau: FloatArray) -> FloatArray:
    """w_t = 1 / (tau_t · sum_i 1/tau_i), with tau floored at 1e-12."""
    floored = np.maximum(np.asarray(tau, dtype=np.float64), TAU_FLOOR)
    ratio = floored.min() / floored
    return ratio / ratio.sum()


def temporal_smooth(
    b: FloatArray, times: FloatArray, tau: FloatArray, gamma: float
) -> TemporalSpline:
    """Fit the weighted cubic smoothing spline to coefficient vectors.

    Solves, column-wise,

        [[2AWA + 2γA, 2AWT, T], [2TᵀWA, 2TᵀWT, 0], [Tᵀ, 0, 0]] [δ; ν; m]
            = [2AWb; 2TᵀWb; 0]

    with A_ij = |t_i - t_j|^3 and T rows (1, t_i). The multipliers m are
    discarded after the side condition Tᵀδ = 0 is checked.

    Raises:
        DegenerateInputError: On repeated time stamps or fewer than 2 times.
        SolverError: If the system is singular or the side condition fails.
    """
    coeffs = np.atleast_2d(np.asarray(b, dtype=np.float64))
    ts = np.asarray(times, dtype=np.float64)
    n = ts.shape[0]
    if coeffs.shape[0] != n or np.shape(tau) != (n,):
        msg = "b, times and tau must have one entry per time point"
        raise ValueError(msg)
    if n < 2:
        msg = f"need >= 2 time points, got {n}"
        raise DegenerateInputError(msg)
    if np.unique(ts).size != n:
        msg = "duplicate time stamps"
        raise DegenerateInputError(msg)
    if gamma < 0:
        msg = f"gamma must be >= 0, got {gamma}"
        raise ValueError(msg)

    weights = inverse_error_weights(np.asarray(tau))
    cubic = np.abs(ts[:, None] - ts[None, :]) ** 3
    basis = np.column_stack([np.ones(n), ts])
    aw = cubic * weights[None, :]
    tw = basis.T * weights[None, :]

    system = np.zeros((n + 4, n + 4))
    system[:n, :n] = 2.0 * aw @ cubic + 2.0 * gamma * cubic
    system[:n, n : n + 2] = 2.0 * aw @ basis
    system[:n, n + 2 :] = basis
    system[n : n + 2, :n] = 2.0 * tw @ cubic
    system[n : n + 2, n : n + 2] = 2.0 * tw @ basis
    system[n + 2 :, :n] = basis.T
    rhs = np.vstack([2.0 * aw @ coeffs, 2.0 * tw @ coeffs, np.zeros((2, coeffs.shape[1]))])

    try:
        solution = linalg.solve(system, rhs)
    except linalg.LinAlgError as exc:
        msg = f"temporal spline system is singular: {exc}"
        raise SolverError(msg) from exc
    delta, nu = solution[:n], solution[n : n + 2]

    side = basis.T @ delta
    scale = float(np.max(np.abs(basis).T @ np.abs(delta))) if delta.size else 0.0
    if scale > 0 and float(np.max(np.abs(side))) > SIDE_CONDITION_TOL * scale:
        msg = "temporal spline side condition violated"
        raise SolverError(msg)
    return TemporalSpline(ts, delta, nu, float(gamma), weights)


# ---------------------------------------------------------------------------
# Per-time fits on a shared parameterization
# ---------------------------------------------------------------------------


def _distinct(params: FloatArray) -> FloatArray:
    """Nudge exactly repeated rows apart along the first axis."""
    _, inverse, counts = np.unique(params, axis=0, return_inverse=True, return_counts=True)
    if np.all(counts == 1):
        return params
    out = params.copy()
    span = float(np.ptp(params[:, 0])) or 1.0
    inverse = np.ravel(inverse)
    for group in np.flatnonzero(counts > 1):
        rows = np.flatnonzero(inverse == group)
        out[rows[1:], 0] += 1e-9 * span * np.arange(1, rows.size)
    return out


def initialize_longitudinal(
    reduced: ReducedCloud,
    data: LongitudinalCloud,
    settings: PmeSettings,
    *,
    workers: int = 0,
    backend: BackendType = "thread",
) -> tuple[list[FloatArray], PmeFit]:
    """Starting parameters for every time point.

    PME is fit to the first time's centers from an Isomap start; the later
    centers are projected onto that first manifold.

    Returns:
        (per-time parameters, first-time fit).
    """
    if reduced.T < 2:
        msg = "need ≥ 2 time points"
        raise DegenerateInputError(msg)
    centers0 = reduced.centers(0)
    init0 = isomap_embed(centers0, data.d, settings.neighbors)
    first = fit_pme(
        centers0,
        reduced.weights(0),
        init0,
        data.clouds[0],
        settings.lambda_grid,
        settings.eps,
        settings.itr,
        projection_starts=settings.projection_starts,
        workers=workers,
        backend=backend,
    )
    params: list[FloatArray] = [first.params]
    for t in range(1, reduced.T):
        projected, _ = project_many(
            first.model, reduced.centers(t), first.model.knots, settings.projection_starts
        )
        params.append(_distinct(projected))
    return params, first


def _fit_time(
    reduced: ReducedCloud,
    data: LongitudinalCloud,
    params: Sequence[FloatArray],
    settings: PmeSettings,
    index: int,
) -> PmeFit:
    return fit_pme(
        reduced.centers(index),
        reduced.weights(index),
        params[index],
        data.clouds[index],
        settings.lambda_grid,
        settings.eps,
        settings.itr,
        projection_starts=settings.projection_starts,
        workers=1,
    )


def _axis_range(lo: FloatArray, hi: FloatArray) -> tuple[FloatArray, FloatArray]:
    lo, hi = lo.copy(), hi.copy()
    spans = hi - lo
    for k in np.flatnonzero(spans <= 0):
        others = np.delete(spans, k)
        other = float(others.max()) if others.size and others.max() > 0 else max(abs(lo[k]), 1.0)
        pad = 0.5e-3 * other
        lo[k] -= pad
        hi[k] += pad
        warnings.warn(
            f"zero parameter range on axis {k}; padded by {2 * pad:.3g}",
            LpmkitWarning,
            stacklevel=3,
        )
    return lo, hi


def shared_grid(
    params: Sequence[FloatArray], n_max: int, grid_size: int | None = None
) -> FloatArray:
    """Knot grid spanning every fitted parameter.

    d=1 uses n_max equally spaced knots; d >= 2 uses the m^d lattice with the
    smallest m such that m^d >= n_max. ``grid_size`` overrides the count per
    axis.
    """
    stacked = np.vstack(params)
    d = stacked.shape[1]
    lo, hi = _axis_range(stacked.min(axis=0), stacked.max(axis=0))
    if grid_size is not None:
        m = grid_size
    elif d == 1:
        m = n_max
    else:
        m = math.ceil(n_max ** (1.0 / d) - 1e-9)
    m = max(m, 3)
    axes = [np.linspace(lo[k], hi[k], m) for k in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def comparable_coefficients(
    fits: Sequence[PmeFit], grid_size: int | None = None
) -> tuple[FloatArray, FloatArray]:
    """Re-express every per-time fit on one shared knot grid.

    Y_t = f_t(r*) is refit at lambda_t* with unit weights.

    Returns:
        (grid, B) with B of shape (T, (N* + d + 1)·D).
    """
    shapes = {(f.model.d, f.model.D) for f in fits}
    if len(shapes) != 1:
        msg = f"fits disagree on (d, D): {sorted(shapes)}"
        raise ValueError(msg)
    n_max = max(f.params.shape[0] for f in fits)
    grid = shared_grid([f.params for f in fits], n_max, grid_size)
    rows = []
    for fit in fits:
        targets = fit.model.evaluate(grid)
        refit = solve_penalized_spline(grid, targets, None, fit.lambda_star)
        rows.append(flatten_coefficients(refit))
    logger.info("shared grid: %d knots", grid.shape[0])
    return grid, np.vstack(rows)


# ---------------------------------------------------------------------------
# Embedding and tuning
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Embedding:
    """Point(s) of F(t, r) plus whether t lies outside the fitted times."""

    point: FloatArray
    extrapolated: bool


def embed(model: LongitudinalModel, t: float, r: Any) -> Embedding:
    """F(t, r): the time-t spline evaluated at parameter(s) r."""
    return Embedding(model.spline_at(t).evaluate(r), model.is_extrapolated(t))


def _folds(n: int, folds: int | None) -> list[np.ndarray]:
    if folds is None:
        return [np.array([t]) for t in range(n)]
    return [np.flatnonzero(np.arange(n) % folds == f) for f in range(min(folds, n))]


def heldout_msd(
    coefficients: FloatArray,
    grid: FloatArray,
    times: FloatArray,
    tau: FloatArray,
    data: LongitudinalCloud,
    gamma: float,
    *,
    folds: int | None = None,
    projection_starts: int | None = None,
) -> float:
    """Cross-validated MSD(gamma): refit without each fold, score the fold."""
    n = times.shape[0]
    contributions = np.empty(n)
    for held in _folds(n, folds):
        keep = np.setdiff1d(np.arange(n), held)
        spline = temporal_smooth(coefficients[keep], times[keep], tau[keep], gamma)
        for t in held:
            model = unflatten_coefficients(spline.evaluate(times[t]), grid, data.D)
            contributions[t] = msd(model, data.clouds[t], grid, projection_starts)
    return float(np.mean(contributions))


def _heldout_task(
    coefficients: FloatArray,
    grid: FloatArray,
    times: FloatArray,
    tau: FloatArray,
    data: LongitudinalCloud,
    folds: int | None,
    projection_starts: int | None,
    gamma: float,
) -> float:
    return heldout_msd(
        coefficients,
        grid,
        times,
        tau,
        data,
        gamma,
        folds=folds,
        projection_starts=projection_starts,
    )


def loocv_tune(
    coefficients: FloatArray,
    grid: FloatArray,
    tau: FloatArray,
    data: LongitudinalCloud,
    gamma_grid: Sequence[float],
    *,
    folds: int | None = None,
    projection_starts: int | None = None,
    workers: int = 0,
    backend: BackendType = "thread",
) -> tuple[float, tuple[tuple[float, float], ...]]:
    """Choose gamma by cross-validated MSD.

    Args:
        coefficients: (T, M) comparable coefficients.
        grid: Shared knots; also the projection seeds at held-out times.
        tau: (T,) per-time data MSDs (reused inside held-out refits).
        data: The observed clouds.
        gamma_grid: Candidates.
        folds: None for leave-one-out, k to hold out time indices by
            residue mod k.

    Returns:
        (gamma*, table): gamma* = argmin MSD with the smallest gamma among
        ties; the table lists every gamma with NaN for failed refits.

    Raises:
        DegenerateInputError: If a held-out refit would keep fewer than 3
            time points.
        SolverError: If every gamma fails.
    """
    grid_values = [float(g) for g in gamma_grid]
    if not grid_values:
        msg = "gamma_grid must be nonempty"
        raise ValueError(msg)
    n = data.T
    largest = max(held.size for held in _folds(n, folds))
    if n - largest < 3:
        msg = (
            f"cross-validation needs >= 3 time points in every refit; "
            f"T={n} leaves {n - largest}"
        )
        raise DegenerateInputError(msg)

    task = functools.partial(
        _heldout_task,
        np.asarray(coefficients),
        np.asarray(grid),
        data.times,
        np.asarray(tau),
        data,
        folds,
        projection_starts,
    )
    results = pmap(task, grid_values, workers=workers, backend=backend, on_error="collect")

    table: list[tuple[float, float]] = []
    for gamma, result in zip(grid_values, results):
        if result.is_ok():
            table.append((gamma, result.value))
        else:
            warnings.warn(
                f"gamma={gamma:.6g} excluded: {result.exception}",
                LpmkitWarning,
                stacklevel=2,
            )
            table.append((gamma, float("nan")))
    valid = [(value, gamma) for gamma, value in table if math.isfinite(value)]
    if not valid:
        msg = "every gamma failed during cross-validation"
        raise SolverError(msg)
    best_value, best_gamma = min(valid)
    logger.info("gamma*=%.6g (MSD %.6g)", best_gamma, best_value)
    return best_gamma, tuple(table)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def _stage(name: str, fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except StageError:
        raise
    except (LpmkitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(str(exc), exc, stage=name) from exc


def fit_lpme(data: LongitudinalCloud, settings: LpmeSettings | None = None) -> LongitudinalModel:
    """Fit a longitudinal principal manifold.

    Raises:
        ConfigError: If gamma must be tuned but T < 4.
        StageError: Wrapping any failure, labelled with its stage.
    """
    settings = settings or LpmeSettings()
    pme_settings = settings.pme
    if settings.gamma is None and data.T < MIN_TUNING_TIMES:
        msg = (
            f"tuning gamma needs at least {MIN_TUNING_TIMES} time points, got "
            f"{data.T}; supply a fixed gamma (--gamma) instead"
        )
        raise ConfigError(msg)
    par: dict[str, Any] = {"workers": settings.workers, "backend": settings.backend}

    reduced: ReducedCloud = _stage(
        "reduce",
        lambda: reduce_longitudinal(data, pme_settings.reduce, seed=settings.seed, **par),
    )
    logger.info("reduced sizes: %s", [m.n_components for m in reduced.mixtures])
    params, first = _stage(
        "init", lambda: initialize_longitudinal(reduced, data, pme_settings, **par)
    )

    task = functools.partial(_fit_time, reduced, data, params, pme_settings)
    later = _stage("pme", lambda: pmap(task, range(1, data.T), **par))
    fits: list[PmeFit] = [first, *later]

    grid, coefficients = _stage(
        "comparable", lambda: comparable_coefficients(fits, settings.grid_size)
    )
    tau = np.array([f.tau for f in fits])
    lambdas = np.array([f.lambda_star for f in fits])

    table: tuple[tuple[float, float], ...] = ()
    gamma = settings.gamma
    if gamma is None:
        gamma, table = _stage(
            "tune",
            lambda: loocv_tune(
                coefficients,
                grid,
                tau,
                data,
                settings.gamma_grid,
                folds=settings.cv_folds,
                projection_starts=pme_settings.projection_starts,
                **par,
            ),
        )
    final_gamma = float(gamma)
    spline = _stage(
        "smooth", lambda: temporal_smooth(coefficients, data.times, tau, final_gamma)
    )
    return LongitudinalModel(
        grid=grid,
        coefficients=coefficients,
        times=data.times,
        tau=tau,
        weights=spline.weights,
        lambdas=lambdas,
        gamma_star=final_gamma,
        temporal_spline=spline,
        msd_table=table,
    )


def model_msd(
    model: LongitudinalModel, data: LongitudinalCloud, starts: int | None = None
) -> FloatArray:
    """Per-time data MSD of a fitted longitudinal model."""
    out = np.empty(data.T)
    for t, (time, cloud) in enumerate(zip(data.times, data.clouds)):
        out[t] = msd(model.spline_at(float(time)), cloud, model.grid, starts)
    return out


# ---------------------------------------------------------------------------
# Volume and sections
# ---------------------------------------------------------------------------


def _surface(
    model: LongitudinalModel, t: float, resolution: int, ambient: int
) -> tuple[FloatArray, np.ndarray]:
    if model.d != 2:
        msg = f"surfaces need d=2, got d={model.d}"
        raise ValueError(msg)
    if resolution < 3:
        msg = f"param_resolution must be >= 3, got {resolution}"
        raise ValueError(msg)
    lattice = _mesh.parameter_lattice(
        model.grid.min(axis=0), model.grid.max(axis=0), resolution
    )
    points = model.spline_at(t).evaluate(lattice)[:, :ambient]
    return points, _mesh.lattice_triangles(resolution, resolution)


def _lifted_surface(
    model: LongitudinalModel, t: float, resolution: int, spec: LiftSpec
) -> tuple[FloatArray, np.ndarray]:
    """Closed surface over a (θ, φ) lattice of a sphere-lifted model.

    Each lattice node is the projection of the lift center carrying the
    node's scaled angles. The pole rows collapse to one point each and the
    φ = ±π columns are joined.
    """
    if spec.mode != "spherical":
        msg = f"lifted volumes need the spherical lift, got {spec.mode!r}"
        raise ValueError(msg)
    if model.D != 5:
        msg = f"a spherical lift gives D=5, got D={model.D}"
        raise ValueError(msg)
    spline = model.spline_at(t)
    center = (
        spline.evaluate(model.grid)[:, :3].mean(axis=0)
        if spec.center is None
        else np.asarray(spec.center)
    )
    theta = np.linspace(0.0, np.pi, resolution)
    phi = np.linspace(-np.pi, np.pi, resolution)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    targets = np.column_stack(
        [np.tile(center, (tt.size, 1)), spec.scale * tt.ravel(), spec.scale * pp.ravel()]
    )
    params, _ = project_many(spline, targets, model.grid, 8)
    points = spline.evaluate(params)[:, :3].reshape(resolution, resolution, 3)
    points[0] = points[0].mean(axis=0)
    points[-1] = points[-1].mean(axis=0)
    seam = 0.5 * (points[:, 0] + points[:, -1])
    points[:, 0] = seam
    points[:, -1] = seam
    return points.reshape(-1, 3), _mesh.lattice_triangles(resolution, resolution)


def estimate_volume(
    model: LongitudinalModel,
    t: float,
    voxel: float,
    param_resolution: int = 60,
    lift: LiftSpec | None = None,
) -> float:
    """Voxel-counted volume inside the time-t surface.

    The first three ambient coordinates are kept. A model fitted to
    sphere-lifted clouds, passed with its ``lift``, is meshed over the
    lift's angle lattice instead of its parameter box, so a closed surface
    stays closed.

    Raises:
        WatertightError: If the surface has no consistent interior.
    """
    if model.D < 3:
        msg = f"volume needs D >= 3, got D={model.D}"
        raise ValueError(msg)
    if lift is None:
        points, triangles = _surface(model, t, param_resolution, 3)
    else:
        if model.d != 2:
            msg = f"surfaces need d=2, got d={model.d}"
            raise ValueError(msg)
        points, triangles = _lifted_surface(model, t, param_resolution, lift)
    volume, inconsistent = _mesh.enclosed_volume(points, triangles, voxel)
    logger.info("t=%.6g: volume %.6g (%.2f%% inconsistent voxels)", t, volume, 100 * inconsistent)
    return volume


def volume_variability(times: FloatArray, volumes: FloatArray) -> tuple[float, float]:
    """(SD, regression-adjusted SD) of a volume trajectory.

    The adjusted SD is the residual SD of the least-squares line of volume on
    time with n - 2 degrees of freedom. Values are NaN when undefined.
    """
    ts = np.asarray(times, dtype=np.float64)
    vs = np.asarray(volumes, dtype=np.float64)
    sd = float(np.std(vs, ddof=1)) if vs.size >= 2 else float("nan")
    if vs.size < 3:
        return sd, float("nan")
    line = stats.linregress(ts, vs)
    residual = vs - (line.intercept + line.slope * ts)
    return sd, float(np.sqrt(np.sum(residual**2) / (vs.size - 2)))


def cross_sections(
    model: LongitudinalModel,
    t: float,
    axis: int,
    values: Sequence[float],
    resolution: int = 100,
) -> list[FloatArray]:
    """Fixed-coordinate slices {x[axis] = value} of the time-t manifold.

    Returns one (k, 2, D) segment array per value. For d=1 each crossing is
    a zero-length segment.
    """
    if not 0 <= axis < model.D:
        msg = f"axis must be in [0, {model.D}), got {axis}"
        raise ValueError(msg)
    if model.d == 2:
        points, triangles = _surface(model, t, resolution, model.D)
        return [_mesh.slice_segments(points, triangles, axis, v) for v in values]
    if model.d != 1:
        msg = f"cross-sections support d=1 and d=2, got d={model.d}"
        raise ValueError(msg)
    ts = np.linspace(model.grid.min(), model.grid.max(), resolution)[:, None]
    curve = model.spline_at(t).evaluate(ts)
    out = []
    for value in values:
        level = curve[:, axis] - value
        idx = np.flatnonzero((level[:-1] < 0) != (level[1:] < 0))
        w = level[idx] / (level[idx] - level[idx + 1])
        hits = curve[idx] + w[:, None] * (curve[idx + 1] - curve[idx])
        out.append(np.stack([hits, hits], axis=1))
    return out
