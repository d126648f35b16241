"""Isomap initial parameterization of reduced centers.

k-NN graph → all-pairs shortest paths → classical MDS on the squared
geodesic matrix. Coincident centers are merged before the graph is built
and share their twin's parameter afterwards; a disconnected graph is
joined by repeatedly adding the shortest edge between two components.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import cdist
from sklearn.neighbors import NearestNeighbors

from lpmkit._errors import DegenerateInputError, SolverError

if TYPE_CHECKING:
    from scipy.sparse import csr_matrix

    from lpmkit._types import FloatArray

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class GeodesicGraph:
    """Neighbourhood graph over distinct centers.

    Attributes:
        vertices: (n, D) distinct centers, in first-occurrence order.
        knn: (n, n) symmetric sparse edge lengths (0 = no edge).
        dist: (n, n) geodesic distances.
        repairs: Number of inter-component edges added.
    """

    vertices: FloatArray
    knn: csr_matrix
    dist: FloatArray
    repairs: int


def default_neighbors(n: int, d: int) -> int:
    """max(d + 2, ceil(log2 n) + 1)."""
    return max(d + 2, math.ceil(math.log2(max(n, 2))) + 1)


def _unique_in_order(points: FloatArray) -> tuple[FloatArray, np.ndarray]:
    _, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return points[first[order]], rank[np.ravel(inverse)]


def geodesic_graph(vertices: FloatArray, k: int) -> GeodesicGraph:
    """Build the symmetric k-NN graph and its shortest-path distances.

    ``vertices`` must already be distinct.
    """
    n = vertices.shape[0]
    k = min(k, n - 1)
    nn = NearestNeighbors(n_neighbors=k).fit(vertices)
    graph = nn.kneighbors_graph(mode="distance").tocsr()
    graph = graph.maximum(graph.T).tolil()

    full = cdist(vertices, vertices)
    repairs = 0
    n_comp, labels = connected_components(graph, directed=False)
    while n_comp > 1:
        between = labels[:, None] != labels[None, :]
        masked = np.where(between, full, np.inf)
        i, j = np.unravel_index(int(np.argmin(masked)), masked.shape)
        graph[i, j] = graph[j, i] = full[i, j]
        repairs += 1
        n_comp, labels = connected_components(graph, directed=False)
    if repairs:
        logger.info("joined disconnected k-NN graph with %d extra edges", repairs)

    knn = graph.tocsr()
    dist = shortest_path(knn, method="D", directed=False)
    return GeodesicGraph(vertices, knn, dist, repairs)


def classical_mds(dist: FloatArray, d: int) -> FloatArray:
    """Top-d classical scaling of a distance matrix, sign-canonicalized.

    Each output coordinate has its first non-negligible loading positive.

    Raises:
        SolverError: If the eigensolver fails or fewer than d positive
            spectral values exist.
    """
    n = dist.shape[0]
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    gram = -0.5 * centering @ (dist**2) @ centering
    gram = 0.5 * (gram + gram.T)
    try:
        values, vectors = linalg.eigh(gram, subset_by_index=[n - d, n - 1])
    except (linalg.LinAlgError, ValueError) as exc:
        msg = f"spectral decomposition failed: {exc}"
        raise SolverError(msg) from exc
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    if values[0] <= 0 or np.any(values <= 1e-10 * values[0]):
        msg = f"fewer than {d} positive spectral values in the geodesic matrix"
        raise SolverError(msg)
    coords = vectors * np.sqrt(values)
    for col in range(d):
        column = coords[:, col]
        tol = 1e-12 * max(1.0, float(np.max(np.abs(column))))
        nonzero = np.flatnonzero(np.abs(column) > tol)
        if nonzero.size and column[nonzero[0]] < 0:
            coords[:, col] = -column
    return coords


def isomap_embed(centers: FloatArray, d: int, k: int | None = None) -> FloatArray:
    """Embed N centers in R^d by Isomap.

    Args:
        centers: (N, D) points; exact duplicates are allowed.
        d: Target dimension.
        k: Neighbour count (None = :func:`default_neighbors`).

    Returns:
        (N, d) parameters, coordinates in descending spectral order.

    Raises:
        DegenerateInputError: If fewer than d + 2 distinct centers remain.
        SolverError: On spectral failure.
    """
    pts = np.asarray(centers, dtype=np.float64)
    unique, inverse = _unique_in_order(pts)
    n = unique.shape[0]
    if n < d + 2:
        msg = f"isomap needs at least d + 2 = {d + 2} distinct centers, got {n}"
        raise DegenerateInputError(msg)
    if k is None:
        k = default_neighbors(n, d)
    if k < d + 1:
        msg = f"k must be >= d + 1 = {d + 1}, got {k}"
        raise ValueError(msg)
    if n < pts.shape[0]:
        logger.debug("merged %d duplicate centers", pts.shape[0] - n)

    graph = geodesic_graph(unique, k)
    params = classical_mds(graph.dist, d)
    return params[inverse]
