"""Shared fixtures and picklable helpers for lpmkit tests."""

from __future__ import annotations

import numpy as np
import pytest

from lpmkit._config import LpmeSettings, PmeSettings, ReduceSettings, exp_grid
from lpmkit.core import LongitudinalCloud, LongitudinalModel, flatten_coefficients
from lpmkit.lpme import temporal_smooth
from lpmkit.pme import solve_penalized_spline


def square(x: int) -> int:
    """CPU-bound test function (picklable, top-level)."""
    return x * x


def failing_fn(x: int) -> int:
    if x == 3:
        raise ValueError(f"bad value: {x}")
    return x * 2


def arc_cloud(
    rng: np.random.Generator, n: int, shift: float = 0.0, noise: float = 0.05
) -> np.ndarray:
    """Noisy samples of the parabola y = x^2 / 2 + shift over [-1, 1]."""
    x = rng.uniform(-1.0, 1.0, n)
    y = 0.5 * x**2 + shift
    return np.column_stack([x, y]) + noise * rng.standard_normal((n, 2))


def sphere_lattice(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """(params, points) of the unit sphere on a (polar, azimuth) lattice."""
    polar = np.linspace(0.0, np.pi, rows)
    azimuth = np.linspace(0.0, 2.0 * np.pi, cols)
    pp, aa = np.meshgrid(polar, azimuth, indexing="ij")
    params = np.column_stack([pp.ravel(), aa.ravel()])
    points = np.column_stack(
        [
            np.sin(params[:, 0]) * np.cos(params[:, 1]),
            np.sin(params[:, 0]) * np.sin(params[:, 1]),
            np.cos(params[:, 0]),
        ]
    )
    return params, points


def constant_model(params: np.ndarray, points: np.ndarray, n_times: int) -> LongitudinalModel:
    """A longitudinal model whose every time slice interpolates ``points``."""
    spline = solve_penalized_spline(params, points, None, 0.0)
    b = np.tile(flatten_coefficients(spline), (n_times, 1))
    times = np.arange(n_times, dtype=np.float64)
    tau = np.ones(n_times)
    temporal = temporal_smooth(b, times, tau, 1.0)
    return LongitudinalModel(
        grid=params,
        coefficients=b,
        times=times,
        tau=tau,
        weights=temporal.weights,
        lambdas=np.zeros(n_times),
        gamma_star=1.0,
        temporal_spline=temporal,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_range() -> list[int]:
    return list(range(20))


@pytest.fixture
def arc_series(rng: np.random.Generator) -> LongitudinalCloud:
    """Five visits of a slowly rising parabola, 120 points each."""
    times = np.linspace(0.0, 1.0, 5)
    clouds = tuple(arc_cloud(rng, 120, shift=0.1 * t) for t in times)
    return LongitudinalCloud(times, clouds, 1)


@pytest.fixture
def fast_settings() -> LpmeSettings:
    """Small grids so full pipeline fits stay within the test timeout."""
    pme = PmeSettings(
        lambda_grid=exp_grid(-6, 0),
        itr=20,
        reduce=ReduceSettings(n0=12, max_components=20),
    )
    return LpmeSettings(pme=pme, gamma_grid=exp_grid(-6, 2), workers=1)
