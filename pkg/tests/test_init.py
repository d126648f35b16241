"""Tests for the Isomap initialization."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import spearmanr

from lpmkit._errors import DegenerateInputError, SolverError
from lpmkit.init import (
    classical_mds,
    default_neighbors,
    geodesic_graph,
    isomap_embed,
)


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


class TestDefaultNeighbors:
    """Tests for the neighbour heuristic."""

    def test_values(self) -> None:
        assert default_neighbors(64, 1) == 7
        assert default_neighbors(4, 2) == 4


class TestGeodesicGraph:
    """Tests for graph construction and repair."""

    def test_connected_chain_distances(self) -> None:
        pts = np.column_stack([np.arange(6.0), np.zeros(6)])
        graph = geodesic_graph(pts, 2)
        assert graph.repairs == 0
        assert graph.dist[0, 5] == pytest.approx(5.0)

    def test_disconnected_clusters_repaired(self) -> None:
        left = np.column_stack([np.linspace(0, 1, 5), np.zeros(5)])
        right = np.column_stack([np.linspace(10, 11, 5), np.zeros(5)])
        graph = geodesic_graph(np.vstack([left, right]), 2)
        assert graph.repairs == 1
        assert np.all(np.isfinite(graph.dist))
        assert graph.dist[0, 9] == pytest.approx(11.0)


class TestClassicalMds:
    """Tests for classical scaling."""

    def test_recovers_line(self) -> None:
        x = np.linspace(0.0, 4.0, 9)
        dist = np.abs(x[:, None] - x[None, :])
        coords = classical_mds(dist, 1)
        np.testing.assert_allclose(np.abs(coords[:, 0] - coords[0, 0]), x, atol=1e-9)

    def test_sign_canonical(self) -> None:
        x = np.linspace(0.0, 4.0, 9)
        coords = classical_mds(np.abs(x[:, None] - x[None, :]), 1)
        first = coords[np.flatnonzero(np.abs(coords[:, 0]) > 1e-9)[0], 0]
        assert first > 0

    def test_too_few_positive_values(self) -> None:
        x = np.linspace(0.0, 1.0, 5)
        dist = np.abs(x[:, None] - x[None, :])
        with pytest.raises(SolverError, match="positive spectral values"):
            classical_mds(dist, 2)


class TestIsomapEmbed:
    """Tests for isomap_embed."""

    def test_arc_order_preserved(self) -> None:
        angle = np.linspace(0.0, np.pi, 40)
        centers = np.column_stack([np.cos(angle), np.sin(angle)])
        params = isomap_embed(centers, 1)
        assert params.shape == (40, 1)
        assert abs(spearmanr(params[:, 0], angle)[0]) > 0.99

    def test_rotation_invariant(self, rng: np.random.Generator) -> None:
        angle = np.sort(rng.uniform(0.0, np.pi, 30))
        centers = np.column_stack([np.cos(angle), np.sin(angle)])
        base = isomap_embed(centers, 1)
        rotated = isomap_embed(centers @ _rotation(0.7).T, 1)
        np.testing.assert_allclose(rotated, base, atol=1e-8)

    def test_duplicates_share_parameters(self) -> None:
        x = np.linspace(0.0, 1.0, 10)
        centers = np.column_stack([x, x**2])
        doubled = np.vstack([centers, centers[3:4]])
        params = isomap_embed(doubled, 1)
        assert params[-1, 0] == params[3, 0]
        np.testing.assert_allclose(params[:10], isomap_embed(centers, 1))

    def test_too_few_centers(self) -> None:
        with pytest.raises(DegenerateInputError, match="distinct centers"):
            isomap_embed(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]), 1)

    def test_k_too_small(self) -> None:
        centers = np.column_stack([np.arange(10.0), np.arange(10.0) ** 2])
        with pytest.raises(ValueError, match="k must be"):
            isomap_embed(centers, 2, k=2)
