"""Tests for the thin-plate kernel, spline evaluation and domain types."""

from __future__ import annotations

import numpy as np
import pytest

from lpmkit._errors import DegenerateInputError
from lpmkit.core import (
    LongitudinalCloud,
    SplineModel,
    eta_gradient_factor,
    eta_kernel,
    flatten_coefficients,
    orthogonality_residual,
    poly_basis,
    unflatten_coefficients,
)


def _random_model(rng: np.random.Generator, n: int, d: int, big_d: int) -> SplineModel:
    return SplineModel(
        rng.standard_normal((n, d)),
        rng.standard_normal((n, big_d)),
        rng.standard_normal((d + 1, big_d)),
    )


class TestEtaKernel:
    """Tests for eta_kernel."""

    def test_zero_distance_is_zero(self) -> None:
        for d in (1, 2, 3):
            assert eta_kernel(d, 0.0) == 0.0

    def test_values(self) -> None:
        assert eta_kernel(1, 2.0) == pytest.approx(8.0)
        assert eta_kernel(2, np.e) == pytest.approx(np.e**2)
        assert eta_kernel(3, 2.0) == pytest.approx(2.0)

    def test_shape_preserved(self) -> None:
        r = np.array([[0.0, 1.0], [2.0, 3.0]])
        assert eta_kernel(2, r).shape == (2, 2)

    def test_dimension_four_rejected(self) -> None:
        with pytest.raises(ValueError, match="undefined for d >= 4"):
            eta_kernel(4, 1.0)

    def test_negative_distance_rejected(self) -> None:
        with pytest.raises(ValueError, match="r >= 0"):
            eta_kernel(2, -1.0)


class TestPolyBasis:
    """Tests for poly_basis."""

    def test_single_point(self) -> None:
        np.testing.assert_array_equal(poly_basis(2, [3.0, 4.0]), [1.0, 3.0, 4.0])

    def test_batch(self) -> None:
        out = poly_basis(1, np.array([[1.0], [2.0]]))
        np.testing.assert_array_equal(out, [[1.0, 1.0], [1.0, 2.0]])

    def test_wrong_width(self) -> None:
        with pytest.raises(ValueError, match="2 coordinates"):
            poly_basis(2, np.zeros((3, 1)))


class TestSplineModel:
    """Tests for SplineModel construction and evaluation."""

    def test_evaluate_matches_definition(self, rng: np.random.Generator) -> None:
        model = _random_model(rng, 6, 2, 3)
        r = rng.standard_normal((4, 2))
        expected = np.zeros((4, 3))
        for i in range(4):
            for j in range(6):
                dist = float(np.linalg.norm(r[i] - model.knots[j]))
                expected[i] += model.s[j] * eta_kernel(2, dist)
            expected[i] += np.concatenate([[1.0], r[i]]) @ model.alpha
        np.testing.assert_allclose(model.evaluate(r), expected, rtol=1e-12, atol=1e-12)

    def test_single_point_shape(self, rng: np.random.Generator) -> None:
        model = _random_model(rng, 5, 1, 2)
        assert model.evaluate([0.3]).shape == (2,)

    def test_jacobian_matches_finite_differences(self, rng: np.random.Generator) -> None:
        for d in (1, 2, 3):
            model = _random_model(rng, 7, d, 4)
            r = rng.standard_normal((3, d)) + 0.1
            jac = model.jacobian(r)
            h = 1e-6
            for k in range(d):
                step = np.zeros(d)
                step[k] = h
                fd = (model.evaluate(r + step) - model.evaluate(r - step)) / (2 * h)
                np.testing.assert_allclose(jac[:, :, k], fd, rtol=1e-5, atol=1e-6)

    def test_duplicate_knots_rejected(self) -> None:
        with pytest.raises(DegenerateInputError, match="pairwise distinct"):
            SplineModel(np.zeros((2, 1)), np.zeros((2, 2)), np.zeros((2, 2)))

    def test_alpha_shape_checked(self) -> None:
        with pytest.raises(ValueError, match="alpha must have shape"):
            SplineModel(np.array([[0.0], [1.0]]), np.zeros((2, 2)), np.zeros((3, 2)))

    def test_arrays_are_read_only(self, rng: np.random.Generator) -> None:
        model = _random_model(rng, 4, 1, 2)
        with pytest.raises(ValueError):
            model.s[0, 0] = 1.0

    def test_gradient_factor_zero_at_knot(self) -> None:
        for d in (1, 2, 3):
            assert eta_gradient_factor(d, np.array([0.0]))[0] == 0.0


class TestCoefficients:
    """Tests for flatten/unflatten and the side condition."""

    def test_flatten_unflatten(self, rng: np.random.Generator) -> None:
        model = _random_model(rng, 5, 2, 3)
        b = flatten_coefficients(model)
        assert b.shape == ((5 + 3) * 3,)
        back = unflatten_coefficients(b, model.knots, 3)
        np.testing.assert_array_equal(back.s, model.s)
        np.testing.assert_array_equal(back.alpha, model.alpha)

    def test_unflatten_wrong_length(self, rng: np.random.Generator) -> None:
        with pytest.raises(ValueError, match="length"):
            unflatten_coefficients(np.zeros(7), rng.standard_normal((4, 1)), 2)

    def test_orthogonality_residual_zero_s(self) -> None:
        model = SplineModel(np.array([[0.0], [1.0], [2.0]]), np.zeros((3, 1)), np.ones((2, 1)))
        assert orthogonality_residual(model) == 0.0


class TestLongitudinalCloud:
    """Tests for LongitudinalCloud validation."""

    def test_basic(self, rng: np.random.Generator) -> None:
        cloud = LongitudinalCloud([0.0, 1.0], (rng.random((5, 2)), rng.random((3, 2))), 1)
        assert cloud.T == 2
        assert cloud.D == 2
        assert cloud.sizes == (5, 3)

    def test_times_must_increase(self, rng: np.random.Generator) -> None:
        with pytest.raises(DegenerateInputError, match="strictly increasing"):
            LongitudinalCloud([1.0, 1.0], (rng.random((3, 2)), rng.random((3, 2))), 1)

    def test_needs_two_times(self, rng: np.random.Generator) -> None:
        with pytest.raises(ValueError, match="2 time points"):
            LongitudinalCloud([0.0], (rng.random((3, 2)),), 1)

    def test_intrinsic_dimension_below_ambient(self, rng: np.random.Generator) -> None:
        with pytest.raises(ValueError, match="1 <= d < D"):
            LongitudinalCloud([0.0, 1.0], (rng.random((3, 2)), rng.random((3, 2))), 2)

    def test_mixed_dimensions(self, rng: np.random.Generator) -> None:
        with pytest.raises(ValueError, match="same dimension"):
            LongitudinalCloud([0.0, 1.0], (rng.random((3, 2)), rng.random((3, 3))), 1)

    def test_subset(self, rng: np.random.Generator) -> None:
        clouds = tuple(rng.random((4, 3)) for _ in range(4))
        cloud = LongitudinalCloud([0.0, 1.0, 2.0, 3.0], clouds, 1)
        sub = cloud.subset([0, 2])
        np.testing.assert_array_equal(sub.times, [0.0, 2.0])
        np.testing.assert_array_equal(sub.clouds[1], clouds[2])
