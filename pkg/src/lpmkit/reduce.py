"""Mixture-center reduction of a point cloud.

Each time point's cloud is summarized by N weighted centers. Lloyd k-means
from a deterministic farthest-point seeding gives the N0 centers, a shared
isotropic Gaussian bandwidth turns them into a mixture, and EM over the
mixture weights gives theta. N then grows one center at a time, each step
warm-started from the accepted mixture so the negative log-likelihood never
rises, until a one-sided paired z-test on per-point log-density gains stops
rejecting.
"""

from __future__ import annotations

import functools
import logging
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from scipy.stats import norm
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from lpmkit._errors import DegenerateInputError
from lpmkit._parallel import pmap

if TYPE_CHECKING:
    from lpmkit._config import ReduceSettings
    from lpmkit._types import BackendType, FloatArray
    from lpmkit.core import LongitudinalCloud

logger = logging.getLogger(__name__)

_WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True, slots=True)
class Mixture:
    """Reduced summary of one cloud.

    Attributes:
        centers: (N, D) component means.
        weights: (N,) positive weights summing to 1.
        bandwidth: Shared isotropic standard deviation.
        log_density: (I,) per-point mixture log-density on the fitting data.
    """

    centers: FloatArray
    weights: FloatArray
    bandwidth: float
    log_density: FloatArray

    @property
    def n_components(self) -> int:
        return int(self.centers.shape[0])

    @property
    def negative_log_likelihood(self) -> float:
        return -float(np.sum(self.log_density))


@dataclass(frozen=True, slots=True)
class ReducedCloud:
    """Per-time mixture reductions of a longitudinal cloud."""

    times: FloatArray
    mixtures: tuple[Mixture, ...]

    @property
    def T(self) -> int:  # noqa: N802
        return len(self.mixtures)

    def centers(self, t_index: int) -> FloatArray:
        return self.mixtures[t_index].centers

    def weights(self, t_index: int) -> FloatArray:
        return self.mixtures[t_index].weights


def farthest_point_seeds(points: FloatArray, n: int, seed: int) -> FloatArray:
    """Pick n seeds: one random point, then repeatedly the farthest point."""
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(points.shape[0]))]
    nearest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, n):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def _lloyd(
    points: FloatArray, init: FloatArray, max_iter: int
) -> tuple[FloatArray, np.ndarray]:
    n = init.shape[0]
    km = KMeans(n_clusters=n, init=init, n_init=1, max_iter=max_iter, algorithm="lloyd")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = km.fit_predict(points)
    centers = np.asarray(km.cluster_centers_, dtype=np.float64)
    # Report exact cluster means so each center stays inside the cloud's box.
    for j in range(n):
        members = labels == j
        if np.any(members):
            centers[j] = points[members].mean(axis=0)
    return centers, labels


def _component_log_density(
    points: FloatArray, centers: FloatArray, sigma: float
) -> FloatArray:
    dim = points.shape[1]
    sq = cdist(points, centers, "sqeuclidean")
    return -sq / (2.0 * sigma**2) - 0.5 * dim * np.log(2.0 * np.pi * sigma**2)


def _em_weights(
    log_comp: FloatArray, init: FloatArray, eps: float, max_iter: int
) -> tuple[FloatArray, FloatArray]:
    """EM over mixture weights only; centers and bandwidth stay fixed."""
    weights = init / init.sum()
    prev = -np.inf
    per_point = logsumexp(log_comp + np.log(weights), axis=1)
    for it in range(max_iter):
        resp = np.exp(log_comp + np.log(weights) - per_point[:, None])
        weights = np.maximum(resp.mean(axis=0), _WEIGHT_FLOOR)
        weights /= weights.sum()
        per_point = logsumexp(log_comp + np.log(weights), axis=1)
        total = float(np.sum(per_point))
        if np.isfinite(prev) and abs(total - prev) <= eps * abs(prev):
            logger.debug("weight EM converged after %d iterations", it + 1)
            break
        prev = total
    return weights, per_point


def _mixture_from_partition(
    points: FloatArray, centers: FloatArray, labels: np.ndarray, eps: float, em_iter: int
) -> Mixture:
    n = centers.shape[0]
    _, first = np.unique(centers, axis=0, return_index=True)
    if first.size < n:
        # Coincident centers (duplicated input points) are merged.
        centers = centers[np.sort(first)]
        labels = np.argmin(cdist(points, centers), axis=1)
        n = centers.shape[0]
    sigma = float(np.mean(np.linalg.norm(points - centers[labels], axis=1)))
    if sigma <= 0.0:
        # Every cluster is a single point; fall back to half the closest
        # pair of centers.
        gaps = cdist(centers, centers)
        gaps[gaps == 0.0] = np.inf
        sigma = 0.5 * float(np.min(gaps)) if np.isfinite(np.min(gaps)) else 1.0
    counts = np.bincount(labels, minlength=n).astype(np.float64)
    log_comp = _component_log_density(points, centers, sigma)
    weights, per_point = _em_weights(log_comp, np.maximum(counts, 1.0), eps, em_iter)
    return Mixture(centers, weights, sigma, per_point)


def fit_mixture(
    points: FloatArray,
    n: int,
    *,
    seed: int,
    eps: float = 1e-3,
    lloyd_iter: int = 100,
    em_iter: int = 500,
) -> Mixture:
    """Fit the N-component reduced mixture to one cloud from scratch."""
    centers, labels = _lloyd(points, farthest_point_seeds(points, n, seed), lloyd_iter)
    return _mixture_from_partition(points, centers, labels, eps, em_iter)


def _nested_mixture(
    points: FloatArray, current: Mixture, extra: FloatArray, eps: float, em_iter: int
) -> Mixture:
    """current plus one center, keeping its bandwidth; never fits worse."""
    centers = np.vstack([current.centers, extra])
    log_comp = _component_log_density(points, centers, current.bandwidth)
    share = 1.0 / centers.shape[0]
    init = np.append(current.weights * (1.0 - share), share)
    weights, per_point = _em_weights(log_comp, init, eps, em_iter)
    if np.sum(per_point) >= np.sum(current.log_density):
        return Mixture(centers, weights, current.bandwidth, per_point)
    # The extra center cannot help at this bandwidth: give it no mass.
    weights = np.append(current.weights, _WEIGHT_FLOOR)
    return Mixture(centers, weights / weights.sum(), current.bandwidth, current.log_density)


def grow_mixture(
    points: FloatArray,
    current: Mixture,
    *,
    eps: float = 1e-3,
    lloyd_iter: int = 100,
    em_iter: int = 500,
) -> Mixture:
    """Refine an N-component mixture to N+1 components.

    The new center is the point farthest from the current centers. Lloyd
    restarts from the current centers plus that point, and the refit
    competes with the current mixture extended by the new center at its
    old bandwidth. The better of the two is returned, so the negative
    log-likelihood on ``points`` never exceeds ``current``'s.

    Raises:
        DegenerateInputError: If every point coincides with a center.
    """
    gaps = np.min(cdist(points, current.centers, "sqeuclidean"), axis=1)
    far = int(np.argmax(gaps))
    if gaps[far] == 0.0:
        msg = "no point is distinct from the current centers"
        raise DegenerateInputError(msg)
    extra = points[far]
    nested = _nested_mixture(points, current, extra, eps, em_iter)
    init = np.vstack([current.centers, extra])
    centers, labels = _lloyd(points, init, lloyd_iter)
    refit = _mixture_from_partition(points, centers, labels, eps, em_iter)
    if (
        refit.n_components == nested.n_components
        and refit.negative_log_likelihood <= nested.negative_log_likelihood
    ):
        return refit
    return nested


def _improvement_pvalue(current: Mixture, candidate: Mixture) -> float:
    """One-sided paired z-test p-value for candidate beating current."""
    gain = candidate.log_density - current.log_density
    sd = float(np.std(gain, ddof=1)) if gain.size > 1 else 0.0
    mean = float(np.mean(gain))
    if sd == 0.0:
        return 0.0 if mean > 0 else 1.0
    z = mean / (sd / np.sqrt(gain.size))
    return float(norm.sf(z))


def reduce_cloud(
    points: FloatArray,
    n0: int,
    alpha: float = 0.05,
    eps: float = 1e-3,
    max_components: int | None = None,
    *,
    seed: int = 0,
    lloyd_iter: int = 100,
    em_iter: int = 500,
) -> Mixture:
    """Reduce one cloud to N weighted mixture centers.

    Args:
        points: (I, D) cloud at one time.
        n0: Minimum number of components. Reducing four points from n0 = 3
            is supported although it sits on the bound N <= I - 1, so n0
            is rejected only above I: n0 = I - 1 and n0 = I are fitted as
            given (n0 = I returns I centers, one above the bound), and
            the cap of I - 1 limits growth only.
        alpha: Level of the sequential test.
        eps: Relative log-likelihood tolerance of the weight EM.
        max_components: Cap on N (None = I - 1).
        seed: Seed for the farthest-point seeding.
        lloyd_iter: Maximum Lloyd iterations per candidate N.
        em_iter: Maximum weight-EM iterations per candidate N.

    Returns:
        The accepted mixture. When n0 already reaches the cap the n0
        mixture is returned without testing. Each accepted step has a
        negative log-likelihood no larger than the one before it.

    Raises:
        DegenerateInputError: On a zero-variance cloud or n0 > I.
    """
    pts = np.asarray(points, dtype=np.float64)
    n_points = pts.shape[0]
    if n_points < 2 or np.all(np.ptp(pts, axis=0) == 0.0):
        msg = "zero-variance cloud"
        raise DegenerateInputError(msg)
    if n0 < 1:
        msg = f"n0 must be >= 1, got {n0}"
        raise ValueError(msg)
    if n0 > n_points:
        msg = f"N0={n0} exceeds the {n_points} available points"
        raise DegenerateInputError(msg)
    if not 0.0 < alpha < 1.0:
        msg = f"alpha must be in (0, 1), got {alpha}"
        raise ValueError(msg)

    cap = n_points - 1 if max_components is None else min(max_components, n_points - 1)
    current = fit_mixture(
        pts, n0, seed=seed, eps=eps, lloyd_iter=lloyd_iter, em_iter=em_iter
    )
    while current.n_components < cap:
        try:
            candidate = grow_mixture(
                pts, current, eps=eps, lloyd_iter=lloyd_iter, em_iter=em_iter
            )
        except DegenerateInputError:
            break
        p_value = _improvement_pvalue(current, candidate)
        logger.debug(
            "N=%d -> %d: p=%.4g", current.n_components, candidate.n_components, p_value
        )
        if p_value >= alpha:
            break
        current = candidate
    logger.info("reduced %d points to %d centers", n_points, current.n_components)
    return current


def _reduce_index(
    data: LongitudinalCloud, settings: ReduceSettings, seed: int, index: int
) -> Mixture:
    cloud = data.clouds[index]
    child = int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
    return reduce_cloud(
        cloud,
        min(settings.resolved_n0(data.d), cloud.shape[0]),
        settings.alpha,
        settings.eps,
        settings.resolved_max_components(data.d),
        seed=child,
        lloyd_iter=settings.lloyd_iter,
        em_iter=settings.em_iter,
    )


def reduce_longitudinal(
    data: LongitudinalCloud,
    settings: ReduceSettings,
    *,
    seed: int = 0,
    workers: int = 0,
    backend: BackendType = "thread",
) -> ReducedCloud:
    """Reduce every time point independently, in parallel.

    Time index t draws its seeding from ``SeedSequence([seed, t])`` so the
    result does not depend on scheduling.
    """
    task = functools.partial(_reduce_index, data, settings, seed)
    mixtures = pmap(task, range(data.T), workers=workers, backend=backend)
    return ReducedCloud(data.times, tuple(mixtures))
