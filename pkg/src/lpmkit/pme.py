"""Principal manifold estimation for a single point cloud.

A fit alternates two steps on the reduced centers mu_j with weights theta_j:

1. Solve the weighted penalized thin-plate system for the spline f given
   the current parameters r_j.
2. Re-project every center onto f: r_j <- argmin_r |mu_j - f(r)|^2.

This runs for every lambda in a grid; lambda* minimizes the data-level mean
squared distance tau(lambda) on the full cloud.
"""

from __future__ import annotations

import functools
import logging
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from lpmkit._config import PmeSettings
from lpmkit._errors import DegenerateInputError, LpmkitWarning, SolverError
from lpmkit._parallel import pmap
from lpmkit.core import SplineModel, eta_kernel, poly_basis
from lpmkit.init import isomap_embed
from lpmkit.reduce import reduce_cloud

if TYPE_CHECKING:
    from collections.abc import Sequence

    from lpmkit._types import BackendType, FloatArray

logger = logging.getLogger(__name__)

MAX_PROJECTION_STEPS = 200
GRADIENT_TOL = 1e-8
_ARMIJO = 1e-4
_MAX_HALVINGS = 40


@dataclass(frozen=True, slots=True)
class PmeFit:
    """Result of :func:`fit_pme`.

    Attributes:
        model: Spline fitted at lambda_star.
        lambda_star: Selected roughness penalty (a member of the grid).
        tau: Data MSD of the selected fit.
        params: Final projection parameters of the centers.
        iterations: Refit/projection rounds used at lambda_star.
        converged: False when the loop hit ``itr`` or stopped early.
        tau_by_lambda: (lambda, tau) for every grid value, NaN on failure.
        history: Weighted center objective after each round at lambda_star.
    """

    model: SplineModel
    lambda_star: float
    tau: float
    params: FloatArray
    iterations: int
    converged: bool
    tau_by_lambda: tuple[tuple[float, float], ...] = field(default=())
    history: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.tau < 0:
            msg = f"tau must be >= 0, got {self.tau}"
            raise ValueError(msg)


# ---------------------------------------------------------------------------
# Penalized spline system
# ---------------------------------------------------------------------------


def kernel_matrix(knots: FloatArray) -> FloatArray:
    """E with E_ij = eta(d, |r_i - r_j|)."""
    return np.asarray(eta_kernel(knots.shape[1], cdist(knots, knots)))


def spline_system(
    params: FloatArray, weights: FloatArray | None, lam: float
) -> FloatArray:
    """Assemble [[E + lam W^-1, R^T], [R, 0]] for the given knots."""
    n, d = params.shape
    kernel = kernel_matrix(params)
    if weights is not None:
        kernel = kernel + lam * np.diag(1.0 / weights)
    else:
        kernel = kernel + lam * np.eye(n)
    basis = poly_basis(d, params).T
    top = np.hstack([kernel, basis.T])
    bottom = np.hstack([basis, np.zeros((d + 1, d + 1))])
    return np.vstack([top, bottom])


def solve_penalized_spline(
    params: FloatArray,
    targets: FloatArray,
    weights: FloatArray | None,
    lam: float,
) -> SplineModel:
    """Fit the weighted penalized thin-plate spline through (params, targets).

    Minimizes sum_j w_j |y_j - f(r_j)|^2 + lam * trace(s^T E s) subject to
    R s = 0. Unit weights (``weights=None``) give E + lam*I in the upper-left
    block.

    Args:
        params: (N, d) pairwise distinct knots.
        targets: (N, D) values to fit.
        weights: (N,) positive weights, or None for unit weights.
        lam: Roughness penalty, >= 0.

    Raises:
        DegenerateInputError: If knots repeat or N < d + 2.
        SolverError: If the knots leave the system singular.
    """
    knots = np.asarray(params, dtype=np.float64)
    values = np.asarray(targets, dtype=np.float64)
    n, d = knots.shape
    if values.shape[0] != n:
        msg = f"expected {n} targets, got {values.shape[0]}"
        raise ValueError(msg)
    if lam < 0:
        msg = f"lambda must be >= 0, got {lam}"
        raise ValueError(msg)
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (n,) or np.any(weights <= 0):
            msg = "weights must be positive, one per knot"
            raise ValueError(msg)
    if n < d + 2:
        msg = f"need at least d + 2 = {d + 2} knots, got {n}"
        raise DegenerateInputError(msg)
    if float(np.min(pdist(knots))) <= 0.0:
        msg = "knots must be pairwise distinct"
        raise DegenerateInputError(msg)
    basis = poly_basis(d, knots)
    if np.linalg.matrix_rank(basis) < d + 1:
        msg = "degenerate knot configuration"
        raise SolverError(msg)

    system = spline_system(knots, weights, lam)
    rhs = np.vstack([values, np.zeros((d + 1, values.shape[1]))])
    try:
        solution = linalg.solve(system, rhs, assume_a="sym")
    except linalg.LinAlgError as exc:
        msg = "degenerate knot configuration"
        raise SolverError(msg) from exc
    if not np.all(np.isfinite(solution)):
        msg = "degenerate knot configuration"
        raise SolverError(msg)
    return SplineModel(knots, solution[:n], solution[n:])


def roughness(model: SplineModel) -> float:
    """Thin-plate roughness trace(s^T E s), summed over output coordinates."""
    kernel = kernel_matrix(model.knots)
    return float(np.einsum("il,ij,jl->", model.s, kernel, model.s))


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def _objective(model: SplineModel, params: FloatArray, points: FloatArray) -> FloatArray:
    return np.sum((points - model.evaluate(params)) ** 2, axis=1)


def _refine(
    model: SplineModel, starts: FloatArray, points: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """Damped Gauss-Newton descent from each start, one point per row."""
    r = starts.copy()
    value = _objective(model, r, points)
    active = np.ones(r.shape[0], dtype=bool)
    d = model.d

    for _step in range(MAX_PROJECTION_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        residual = points[idx] - model.evaluate(r[idx])
        jac = model.jacobian(r[idx])
        grad = -2.0 * np.einsum("mlk,ml->mk", jac, residual)
        small = np.linalg.norm(grad, axis=1) < GRADIENT_TOL
        active[idx[small]] = False
        idx, residual, jac, grad = idx[~small], residual[~small], jac[~small], grad[~small]
        if idx.size == 0:
            break

        normal = np.einsum("mlk,mlj->mkj", jac, jac)
        damping = 1e-10 * (np.trace(normal, axis1=1, axis2=2) + 1.0)
        normal += damping[:, None, None] * np.eye(d)
        direction = np.linalg.solve(normal, -0.5 * grad[..., None])[..., 0]
        slope = np.einsum("mk,mk->m", grad, direction)

        step = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(_MAX_HALVINGS):
            trial = r[idx[pending]] + step[pending, None] * direction[pending]
            trial_value = _objective(model, trial, points[idx[pending]])
            ok = trial_value <= value[idx[pending]] + _ARMIJO * step[pending] * slope[pending]
            hit = np.flatnonzero(pending)[ok]
            r[idx[hit]] = trial[ok]
            value[idx[hit]] = trial_value[ok]
            pending[hit] = False
            if not pending.any():
                break
            step[pending] *= 0.5
        # No acceptable step: the start is already a local minimum.
        active[idx[pending]] = False

    return r, value


def project_many(
    model: SplineModel,
    points: FloatArray,
    seeds: FloatArray | None = None,
    starts: int | None = None,
) -> tuple[FloatArray, FloatArray]:
    """Project each point onto the spline by multi-start local descent.

    Each point starts from its ``starts`` seeds with the closest images
    (every seed when None), and the best local minimum is kept.

    Returns:
        (params, sq_distances): (m, d) projection parameters and (m,)
        squared distances, each no larger than the best seed's.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    seed_params = model.knots if seeds is None else np.atleast_2d(np.asarray(seeds, dtype=np.float64))
    m = pts.shape[0]
    if m == 0:
        return np.empty((0, model.d)), np.empty(0)
    if seed_params.shape[0] == 0:
        msg = "seeds must be nonempty"
        raise ValueError(msg)

    images = model.evaluate(seed_params)
    seed_dist = cdist(pts, images, "sqeuclidean")
    k = seed_params.shape[0] if starts is None else min(starts, seed_params.shape[0])
    if k < seed_params.shape[0]:
        best = np.argpartition(seed_dist, k - 1, axis=1)[:, :k]
    else:
        best = np.broadcast_to(np.arange(k), (m, k))

    flat_starts = seed_params[best.ravel()]
    flat_points = np.repeat(pts, k, axis=0)
    refined, values = _refine(model, flat_starts, flat_points)
    values = values.reshape(m, k)
    winner = np.argmin(values, axis=1)
    rows = np.arange(m)
    params = refined.reshape(m, k, model.d)[rows, winner]
    return params, values[rows, winner]


def project(
    model: SplineModel, x: FloatArray, seeds: FloatArray | None = None
) -> FloatArray:
    """Projection index of one point: every seed (default: the knots) is tried."""
    params, _ = project_many(model, np.asarray(x, dtype=np.float64)[None, :], seeds)
    return params[0]


def msd(
    model: SplineModel,
    points: FloatArray,
    seeds: FloatArray | None = None,
    starts: int | None = None,
) -> float:
    """Mean squared distance from points to the manifold."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] == 0:
        return 0.0
    _, sq = project_many(model, pts, seeds, starts)
    return float(np.mean(sq))


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class _LambdaFit:
    lam: float
    model: SplineModel
    params: FloatArray
    tau: float
    iterations: int
    converged: bool
    history: tuple[float, ...]


def _fit_one_lambda(
    centers: FloatArray,
    weights: FloatArray,
    init_params: FloatArray,
    data: FloatArray,
    eps: float,
    itr: int,
    starts: int | None,
    lam: float,
) -> _LambdaFit:
    params = init_params
    model = solve_penalized_spline(params, centers, weights, lam)
    history: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, itr + 1):
        new_params, sq = project_many(model, centers, model.knots, starts)
        # weighted center objective, without the roughness term
        history.append(float(np.dot(weights, sq)))
        if len(history) > 1:
            prev = history[-2]
            if abs(history[-1] - prev) <= eps * max(abs(prev), np.finfo(float).tiny):
                params = new_params
                converged = True
                break
        if float(np.min(pdist(new_params))) <= 0.0:
            logger.debug("lambda=%.3g: projections collided at round %d", lam, iterations)
            params = new_params
            break
        params = new_params
        model = solve_penalized_spline(params, centers, weights, lam)

    tau = msd(model, data, model.knots, starts)
    logger.debug(
        "lambda=%.3g: tau=%.6g after %d rounds (converged=%s)", lam, tau, iterations, converged
    )
    return _LambdaFit(lam, model, params, tau, iterations, converged, tuple(history))


def fit_pme(
    centers: FloatArray,
    weights: FloatArray,
    init_params: FloatArray,
    data: FloatArray,
    lambda_grid: Sequence[float],
    eps: float = 1e-3,
    itr: int = 100,
    *,
    projection_starts: int | None = 4,
    workers: int = 0,
    backend: BackendType = "thread",
) -> PmeFit:
    """Fit a principal manifold for every lambda and keep the best tau.

    Args:
        centers: (N, D) reduced centers.
        weights: (N,) center weights.
        init_params: (N, d) initial parameters, pairwise distinct.
        data: (I, D) full cloud used to score tau(lambda).
        lambda_grid: Candidate penalties.
        eps: Relative tolerance on the weighted center objective.
        itr: Maximum rounds per lambda.
        projection_starts: Best seeds refined per projected point.
        workers: Parallel workers over the grid (0 = auto).
        backend: Executor backend.

    Returns:
        The fit at lambda* = argmin tau (smallest lambda among ties).

    Raises:
        SolverError: If every lambda fails; the first failure is re-raised.
    """
    mu = np.asarray(centers, dtype=np.float64)
    theta = np.asarray(weights, dtype=np.float64)
    init = np.asarray(init_params, dtype=np.float64)
    if not len(mu) == len(theta) == len(init):
        msg = "centers, weights and init_params must have equal lengths"
        raise ValueError(msg)
    grid = [float(lam) for lam in lambda_grid]
    if not grid:
        msg = "lambda_grid must be nonempty"
        raise ValueError(msg)

    task = functools.partial(
        _fit_one_lambda, mu, theta, init, np.asarray(data, dtype=np.float64), eps, itr,
        projection_starts,
    )
    results = pmap(task, grid, workers=workers, backend=backend, on_error="collect")

    fits: list[_LambdaFit] = []
    table: list[tuple[float, float]] = []
    first_error: BaseException | None = None
    for lam, result in zip(grid, results):
        if result.is_ok():
            fits.append(result.value)
            table.append((lam, result.value.tau))
        else:
            first_error = first_error or result.exception
            table.append((lam, float("nan")))
            warnings.warn(
                f"PME fit failed at lambda={lam:.6g}: {result.exception}",
                LpmkitWarning,
                stacklevel=2,
            )
    if not fits:
        assert first_error is not None
        raise first_error

    best = min(fits, key=lambda f: (f.tau, f.lam))
    logger.info("lambda*=%.6g tau=%.6g (%d rounds)", best.lam, best.tau, best.iterations)
    return PmeFit(
        model=best.model,
        lambda_star=best.lam,
        tau=best.tau,
        params=best.params,
        iterations=best.iterations,
        converged=best.converged,
        tau_by_lambda=tuple(table),
        history=best.history,
    )


def initial_parameters(
    points: FloatArray,
    d: int,
    settings: PmeSettings,
    *,
    seed: int = 0,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Reduce a cloud and Isomap-embed its centers.

    Returns:
        (centers, weights, init_params).
    """
    pts = np.asarray(points, dtype=np.float64)
    n0 = min(settings.reduce.resolved_n0(d), pts.shape[0])
    mixture = reduce_cloud(
        pts,
        n0,
        settings.reduce.alpha,
        settings.reduce.eps,
        settings.reduce.resolved_max_components(d),
        seed=seed,
        lloyd_iter=settings.reduce.lloyd_iter,
        em_iter=settings.reduce.em_iter,
    )
    params = isomap_embed(mixture.centers, d, settings.neighbors)
    return mixture.centers, mixture.weights, params


def fit_pme_cloud(
    points: FloatArray,
    d: int,
    settings: PmeSettings | None = None,
    *,
    seed: int = 0,
    workers: int = 0,
    backend: BackendType = "thread",
) -> PmeFit:
    """Stand-alone PME on one cloud: reduce, Isomap-initialize, fit."""
    settings = settings or PmeSettings()
    centers, weights, init = initial_parameters(points, d, settings, seed=seed)
    return fit_pme(
        centers,
        weights,
        init,
        points,
        settings.lambda_grid,
        settings.eps,
        settings.itr,
        projection_starts=settings.projection_starts,
        workers=workers,
        backend=backend,
    )

