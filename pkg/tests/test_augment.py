"""Tests for angle-coordinate lifts and standardization."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from lpmkit._errors import DegenerateInputError
from lpmkit.augment import LiftSpec, drop, drop_model, lift, standardize
from lpmkit.pme import solve_penalized_spline


class TestLiftSpec:
    """Tests for LiftSpec validation."""

    def test_dimensions(self) -> None:
        assert LiftSpec("polar").ambient_dim == 2
        assert LiftSpec("polar").added_dims == 1
        assert LiftSpec("spherical").ambient_dim == 3
        assert LiftSpec("spherical").added_dims == 2

    def test_unknown_mode(self) -> None:
        with pytest.raises(ValueError, match="mode"):
            LiftSpec("cylindrical")  # type: ignore[arg-type]

    def test_scale_positive(self) -> None:
        with pytest.raises(ValueError, match="scale must be > 0"):
            LiftSpec("polar", scale=0.0)

    def test_center_length(self) -> None:
        with pytest.raises(ValueError, match="2 coordinates"):
            LiftSpec("polar", center=(0.0, 0.0, 0.0))

    def test_about_centroid(self, rng: np.random.Generator) -> None:
        pts = rng.random((20, 3))
        spec = LiftSpec.about_centroid(pts, "spherical", 2.0)
        np.testing.assert_allclose(spec.center, pts.mean(axis=0))
        assert spec.scale == 2.0


class TestLift:
    """Tests for lift and drop."""

    def test_polar_angles(self) -> None:
        pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [-1.0, -0.0], [0.0, -1.0]])
        out = lift(pts, LiftSpec("polar", center=(0.0, 0.0)))
        np.testing.assert_allclose(
            out[:, 2], [0.0, np.pi / 2, np.pi, np.pi, -np.pi / 2], atol=1e-15
        )

    def test_polar_range(self, rng: np.random.Generator) -> None:
        angles = lift(rng.standard_normal((200, 2)), LiftSpec("polar", center=(0.0, 0.0)))[:, 2]
        assert np.all(angles > -np.pi)
        assert np.all(angles <= np.pi)

    def test_scale_multiplies_angles(self, rng: np.random.Generator) -> None:
        pts = rng.standard_normal((10, 2))
        one = lift(pts, LiftSpec("polar", 1.0, (0.0, 0.0)))
        three = lift(pts, LiftSpec("polar", 3.0, (0.0, 0.0)))
        np.testing.assert_allclose(three[:, 2], 3.0 * one[:, 2])

    def test_spherical_angles(self) -> None:
        pts = np.array([[0.0, 0.0, 2.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
        out = lift(pts, LiftSpec("spherical", center=(0.0, 0.0, 0.0)))
        np.testing.assert_allclose(out[:, 3], [0.0, np.pi / 2, np.pi], atol=1e-15)
        np.testing.assert_allclose(out[:, 4], [0.0, np.pi / 2, 0.0], atol=1e-15)

    def test_default_center_is_centroid(self, rng: np.random.Generator) -> None:
        pts = rng.random((15, 2))
        np.testing.assert_array_equal(
            lift(pts, LiftSpec("polar")), lift(pts, LiftSpec.about_centroid(pts, "polar"))
        )

    def test_point_at_center(self) -> None:
        with pytest.raises(DegenerateInputError, match="coincides"):
            lift([[1.0, 1.0]], LiftSpec("polar", center=(1.0, 1.0)))

    def test_wrong_dimension(self) -> None:
        with pytest.raises(ValueError, match="R\\^3"):
            lift(np.zeros((3, 2)), LiftSpec("spherical"))

    def test_empty(self) -> None:
        assert lift(np.empty((0, 2)), LiftSpec("polar")).shape == (0, 3)

    def test_drop_inverts_lift(self, rng: np.random.Generator) -> None:
        pts = rng.standard_normal((100_000, 3))
        lifted = lift(pts, LiftSpec("spherical", 0.5))
        np.testing.assert_array_equal(drop(lifted, 3), pts)
        planar = pts[:, :2]
        np.testing.assert_array_equal(drop(lift(planar, LiftSpec("polar", 2.0)), 2), planar)

    def test_seam_neighbours_are_separated(self) -> None:
        angles = np.linspace(-np.pi, np.pi, 401)[1:]
        pts = np.column_stack([np.cos(angles), np.sin(angles)])
        lifted = lift(pts, LiftSpec("polar", 1.0, (0.0, 0.0)))
        near = cdist(pts, pts) < 0.05
        turn = np.abs(lifted[:, 2][:, None] - lifted[:, 2][None, :])
        lifted_dist = cdist(lifted, lifted)
        across = near & (turn > np.pi)
        assert across.any()
        assert lifted_dist[across].min() >= 2.0 * np.pi - 0.06
        along = near & (turn <= np.pi)
        assert lifted_dist[along].max() < 0.075

    def test_drop_needs_extra_coordinates(self) -> None:
        with pytest.raises(ValueError, match="cannot drop"):
            drop(np.zeros((2, 2)), 2)

    def test_drop_model(self) -> None:
        knots = np.linspace(0.0, 1.0, 6)[:, None]
        targets = np.column_stack([knots[:, 0], knots[:, 0] ** 2, np.sin(knots[:, 0])])
        model = solve_penalized_spline(knots, targets, None, 0.0)
        dropped = drop_model(model, 2)
        assert dropped.D == 2
        r = np.array([[0.25], [0.8]])
        np.testing.assert_allclose(dropped.evaluate(r), model.evaluate(r)[:, :2])


class TestStandardize:
    """Tests for standardize."""

    def test_max_abs_one(self, rng: np.random.Generator) -> None:
        pts = rng.normal(5.0, 3.0, (40, 3))
        out, transform = standardize(pts)
        np.testing.assert_allclose(np.max(np.abs(out), axis=0), 1.0)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(transform.invert(out), pts)

    def test_constant_column_centered(self) -> None:
        pts = np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]])
        out, _ = standardize(pts)
        np.testing.assert_array_equal(out[:, 1], 0.0)
