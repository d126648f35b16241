"""Lattice triangulation, voxel parity counting and slicing.

The surface of a d=2 model is sampled on a rectangular parameter lattice;
each lattice cell is split into two triangles. Volumes are counted by ray
parity along all three axes with a majority vote per voxel.
"""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING

import numpy as np

from lpmkit._errors import WatertightError

if TYPE_CHECKING:
    from lpmkit._types import FloatArray

logger = logging.getLogger(__name__)

INCONSISTENT_LIMIT = 0.02
_COLUMN_CHUNK = 32
# Column offsets (fractions of a voxel) that keep rays off lattice edges.
_JITTER = (math.sqrt(2.0) * 1e-7, math.sqrt(3.0) * 1e-7)


def lattice_triangles(rows: int, cols: int) -> np.ndarray:
    """(2·(rows-1)·(cols-1), 3) vertex indices of a row-major lattice."""
    i, j = np.meshgrid(np.arange(rows - 1), np.arange(cols - 1), indexing="ij")
    a = (i * cols + j).ravel()
    b = a + 1
    c = a + cols
    e = c + 1
    return np.vstack([np.stack([a, b, e], axis=1), np.stack([a, e, c], axis=1)])


def parameter_lattice(lo: FloatArray, hi: FloatArray, resolution: int) -> FloatArray:
    """Row-major (resolution², 2) lattice over [lo, hi]."""
    u = np.linspace(lo[0], hi[0], resolution)
    v = np.linspace(lo[1], hi[1], resolution)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def _axis_parity(
    tri: FloatArray, axis: int, centers: tuple[FloatArray, FloatArray, FloatArray], voxel: float
) -> np.ndarray:
    """Crossing parity of rays cast in +axis from every voxel center."""
    plane = [k for k in range(3) if k != axis]
    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    ax, ay = p0[:, plane[0]], p0[:, plane[1]]
    e1x, e1y = p1[:, plane[0]] - ax, p1[:, plane[1]] - ay
    e2x, e2y = p2[:, plane[0]] - ax, p2[:, plane[1]] - ay
    det = e1x * e2y - e1y * e2x
    keep = np.abs(det) > 1e-14 * voxel**2
    ax, ay, e1x, e1y, e2x, e2y, det = (
        arr[keep] for arr in (ax, ay, e1x, e1y, e2x, e2y, det)
    )
    za = p0[keep, axis]
    dz1 = p1[keep, axis] - za
    dz2 = p2[keep, axis] - za

    cu = centers[plane[0]] + _JITTER[0] * voxel
    cv = centers[plane[1]] + _JITTER[1] * voxel
    along = centers[axis]
    uu, vv = np.meshgrid(cu, cv, indexing="ij")
    cols_u, cols_v = uu.ravel(), vv.ravel()

    counts = np.zeros((cols_u.size, along.size), dtype=np.int64)
    for start in range(0, cols_u.size, _COLUMN_CHUNK):
        qx = cols_u[start : start + _COLUMN_CHUNK, None] - ax[None, :]
        qy = cols_v[start : start + _COLUMN_CHUNK, None] - ay[None, :]
        beta = (qx * e2y - qy * e2x) / det
        gamma = (e1x * qy - e1y * qx) / det
        inside = (beta >= 0) & (gamma >= 0) & (beta + gamma <= 1)
        heights = za + beta * dz1 + gamma * dz2
        for row, (mask, h) in enumerate(zip(inside, heights)):
            hits = np.sort(h[mask])
            counts[start + row] = hits.size - np.searchsorted(hits, along, side="right")

    # counts is indexed (u, v, along); reorder to (x, y, z).
    cube = counts.reshape(cu.size, cv.size, along.size)
    order = [plane[0], plane[1], axis]
    return np.moveaxis(cube % 2 == 1, [0, 1, 2], order)


def enclosed_volume(
    vertices: FloatArray, triangles: np.ndarray, voxel: float
) -> tuple[float, float]:
    """Voxel-count the volume enclosed by a triangulated surface in R^3.

    Returns:
        (volume, inconsistent_fraction).

    Raises:
        WatertightError: If more than 2% of voxels get disagreeing
            parity votes across the three axes.
    """
    if voxel <= 0:
        msg = f"voxel must be > 0, got {voxel}"
        raise ValueError(msg)
    pts = np.asarray(vertices, dtype=np.float64)
    if pts.shape[1] != 3:
        msg = f"volume needs points in R^3, got R^{pts.shape[1]}"
        raise ValueError(msg)
    lo = pts.min(axis=0) - voxel
    hi = pts.max(axis=0) + voxel
    counts = np.maximum(np.ceil((hi - lo) / voxel).astype(int), 1)
    centers = tuple(lo[k] + (np.arange(counts[k]) + 0.5) * voxel for k in range(3))
    tri = pts[triangles]

    votes = np.zeros(tuple(counts), dtype=np.int64)
    for axis in range(3):
        votes += _axis_parity(tri, axis, centers, voxel)
    interior = votes >= 2
    inconsistent = float(np.mean((votes > 0) & (votes < 3)))
    logger.debug(
        "voxel grid %s: %d interior, %.4f inconsistent",
        tuple(counts),
        int(interior.sum()),
        inconsistent,
    )
    if inconsistent > INCONSISTENT_LIMIT:
        raise WatertightError
    return float(interior.sum()) * voxel**3, inconsistent


def slice_segments(
    points: FloatArray, triangles: np.ndarray, axis: int, value: float
) -> FloatArray:
    """Marching-triangles slice {x[axis] = value} of a triangulated surface.

    Returns:
        (k, 2, D) segment endpoints.
    """
    level = points[:, axis] - value
    segments: list[FloatArray] = []
    for tri in triangles:
        ends: list[FloatArray] = []
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            la, lb = level[a], level[b]
            if (la < 0) != (lb < 0):
                w = la / (la - lb)
                ends.append(points[a] + w * (points[b] - points[a]))
        if len(ends) == 2:
            segments.append(np.stack(ends))
    if not segments:
        return np.empty((0, 2, points.shape[1]))
    return np.stack(segments)
