"""Simulation benchmark: eight embedding cases, noise model, factorial runs.

Each visit t observes f_t(r) + zeta·h(t)·u + iota where alpha and beta
(length-2 vectors, mean 1) perturb the embedding per visit, zeta scales a
structural change h(t) along a direction u drawn once per run, and iota is
per-point noise. The truth at visit t is the same embedding with
alpha = beta = 1 and no noise, at the same parameters r.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Protocol

import numpy as np

from lpmkit._config import LpmeSettings, PmeSettings
from lpmkit._parallel import pmap
from lpmkit._types import CHANGE_MODELS
from lpmkit.augment import LiftSpec, drop_model, lift
from lpmkit.core import LongitudinalCloud
from lpmkit.lpme import fit_lpme
from lpmkit.pme import fit_pme_cloud, project_many

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping, Sequence

    from lpmkit._types import BackendType, ChangeModel, FloatArray, LiftMode
    from lpmkit.core import SplineModel

logger = logging.getLogger(__name__)

PI = math.pi


def _case1(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    x = r[:, 0]
    return np.column_stack([x, a[0] * np.sin(b[0] * x + PI / 2)])


def _case2(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    x = r[:, 0]
    return np.column_stack([x, a[0] * np.sin(b[0] * x)])


def _case3(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    x = r[:, 0]
    return np.column_stack([a[0] * np.cos(b[0] * x), a[1] * np.sin(b[1] * x)])


def _case4(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    x = r[:, 0]
    return np.column_stack([x, (a[0] * x + b[0]) ** 2, (a[1] * x + b[1]) ** 3])


def _case5(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    x = r[:, 0]
    return np.column_stack([x, a[0] * np.cos(b[0] * x), a[1] * np.sin(b[1] * x)])


def _case6(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    scaled = r * b[None, :]
    height = a[0] * a[1] * np.sum(scaled**2, axis=1)
    return np.column_stack([scaled[:, 0], scaled[:, 1], height])


def _case7(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    u, v = r[:, 0], r[:, 1]
    return np.column_stack(
        [a[0] * b[0] * u * np.cos(a[0] * u), a[1] * b[1] * u * np.sin(a[1] * u), v]
    )


def _case8(r: FloatArray, a: FloatArray, b: FloatArray) -> FloatArray:
    polar, azimuth = b[0] * r[:, 0], b[1] * r[:, 1]
    return np.column_stack(
        [
            a[0] * np.sin(polar) * np.cos(azimuth),
            a[0] * np.sin(polar) * np.sin(azimuth),
            a[0] * np.cos(polar),
        ]
    )


@dataclass(frozen=True, slots=True)
class Case:
    """One embedding: f(r, alpha, beta) over a rectangular domain."""

    number: int
    d: int
    D: int
    embedding: Callable[[FloatArray, FloatArray, FloatArray], FloatArray]
    domain: tuple[tuple[float, float], ...]

    def sample_params(self, rng: np.random.Generator, n: int) -> FloatArray:
        lo = np.array([lo for lo, _ in self.domain])
        hi = np.array([hi for _, hi in self.domain])
        return lo + (hi - lo) * rng.random((n, self.d))

    def truth(self, r: FloatArray) -> FloatArray:
        ones = np.ones(2)
        return self.embedding(r, ones, ones)


CASES: dict[int, Case] = {
    1: Case(1, 1, 2, _case1, ((-3.0, 3.0),)),
    2: Case(2, 1, 2, _case2, ((-3 * PI, 3 * PI),)),
    3: Case(3, 1, 2, _case3, ((-4 * PI / 5, PI / 2),)),
    4: Case(4, 1, 3, _case4, ((-1.0, 1.0),)),
    5: Case(5, 1, 3, _case5, ((0.0, 3 * PI),)),
    6: Case(6, 2, 3, _case6, ((-1.0, 1.0), (-1.0, 1.0))),
    7: Case(7, 2, 3, _case7, ((0.0, 3 * PI), (-1.0, 1.0))),
    8: Case(8, 2, 3, _case8, ((0.0, PI), (0.0, 2 * PI))),
}


def get_case(number: int) -> Case:
    try:
        return CASES[number]
    except KeyError:
        msg = f"unknown case {number}; expected 1..{len(CASES)}"
        raise ValueError(msg) from None


def change(model: ChangeModel, t: FloatArray | float) -> Any:
    """h(t) for the structural change model."""
    if model == "constant":
        return np.ones_like(np.asarray(t, dtype=np.float64))
    if model == "linear":
        return np.asarray(t, dtype=np.float64)
    if model == "quadratic":
        return np.asarray(t, dtype=np.float64) ** 2
    if model == "sinusoidal":
        return np.sin(t)
    msg = f"change_model must be one of {CHANGE_MODELS}, got {model!r}"
    raise ValueError(msg)


@dataclass(frozen=True, slots=True)
class SimSpec:
    """One simulated longitudinal data set.

    Attributes:
        case: Embedding case, 1..8.
        sd_alpha: SD of the per-visit alpha draws (mean 1).
        sd_beta: SD of the per-visit beta draws (mean 1).
        sd_zeta: SD of the per-visit structural change scale (mean 0).
        duration: Time span of the study.
        interval: Time between visits.
        change_model: Shape of h(t).
        n_per_time: Points observed per visit.
        sd_iota: Per-point noise SD.
        seed: RNG seed.
    """

    case: int
    sd_alpha: float = 0.0
    sd_beta: float = 0.0
    sd_zeta: float = 0.0
    duration: float = 1.0
    interval: float = 0.25
    change_model: ChangeModel = "constant"
    n_per_time: int = 300
    sd_iota: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        get_case(self.case)
        if self.duration <= 0 or self.interval <= 0:
            msg = "duration and interval must be > 0"
            raise ValueError(msg)
        visits = self.duration / self.interval
        if abs(visits - round(visits)) > 1e-9:
            msg = (
                f"duration/interval must be an integer, got "
                f"{self.duration}/{self.interval} = {visits}"
            )
            raise ValueError(msg)
        if min(self.sd_alpha, self.sd_beta, self.sd_zeta, self.sd_iota) < 0:
            msg = "standard deviations must be >= 0"
            raise ValueError(msg)
        if self.change_model not in CHANGE_MODELS:
            msg = f"change_model must be one of {CHANGE_MODELS}, got {self.change_model!r}"
            raise ValueError(msg)
        if self.n_per_time < 1:
            msg = f"n_per_time must be >= 1, got {self.n_per_time}"
            raise ValueError(msg)

    @property
    def n_visits(self) -> int:
        return round(self.duration / self.interval) + 1

    @property
    def times(self) -> FloatArray:
        return np.arange(self.n_visits) * self.interval


@dataclass(frozen=True, slots=True)
class SimOutput:
    """Observed clouds with their noise-free counterparts."""

    spec: SimSpec
    observed: LongitudinalCloud
    truth: tuple[FloatArray, ...]
    truth_params: tuple[FloatArray, ...]


def generate(spec: SimSpec) -> SimOutput:
    """Draw one simulated data set; identical specs give identical output."""
    case = get_case(spec.case)
    rng = np.random.default_rng(spec.seed)
    direction = rng.standard_normal(case.D)
    observed: list[FloatArray] = []
    truth: list[FloatArray] = []
    params: list[FloatArray] = []
    for t in spec.times:
        r = case.sample_params(rng, spec.n_per_time)
        alpha = rng.normal(1.0, spec.sd_alpha, 2)
        beta = rng.normal(1.0, spec.sd_beta, 2)
        zeta = rng.normal(0.0, spec.sd_zeta)
        iota = rng.normal(0.0, spec.sd_iota, (spec.n_per_time, case.D))
        shift = zeta * change(spec.change_model, t) * direction
        observed.append(case.embedding(r, alpha, beta) + shift + iota)
        truth.append(case.truth(r))
        params.append(r)
    cloud = LongitudinalCloud(spec.times, tuple(observed), case.d)
    return SimOutput(spec, cloud, tuple(truth), tuple(params))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


class Projector(Protocol):
    """Anything that reports squared distances of points to a manifold."""

    def squared_distances(self, points: FloatArray) -> FloatArray: ...


@dataclass(frozen=True, slots=True)
class SplineProjector:
    """Projector onto a fitted spline."""

    model: SplineModel
    seeds: FloatArray | None = None
    starts: int | None = None

    def squared_distances(self, points: FloatArray) -> FloatArray:
        _, sq = project_many(self.model, points, self.seeds, self.starts)
        return sq


def msd_to_truth(fitted: Projector, truth: FloatArray) -> float:
    """Mean squared distance from truth samples to the fitted manifold."""
    pts = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pts.shape[0] == 0:
        return 0.0
    return float(np.mean(fitted.squared_distances(pts)))


def data_msd(observed: FloatArray, truth: FloatArray) -> float:
    """Mean of |x_i - truth_i|^2 over paired observed/true points."""
    return float(np.mean(np.sum((observed - truth) ** 2, axis=1)))


class Estimator(Protocol):
    """A method scored in the factorial harness."""

    name: str

    def score(self, output: SimOutput) -> FloatArray:
        """Per-visit MSD-to-truth."""
        ...


@dataclass(frozen=True, slots=True)
class DataEstimator:
    """The raw observations themselves."""

    name: str = "Data"

    def score(self, output: SimOutput) -> FloatArray:
        return np.array(
            [data_msd(o, t) for o, t in zip(output.observed.clouds, output.truth)]
        )


def _lift_clouds(
    clouds: Iterable[FloatArray], mode: LiftMode | None
) -> list[FloatArray]:
    if mode is None:
        return list(clouds)
    return [lift(c, LiftSpec(mode)) for c in clouds]


@dataclass(frozen=True, slots=True)
class PmeEstimator:
    """PME fit independently at every visit.

    Attributes:
        settings: Per-visit fit settings.
        lift_mode: Optional angle lift applied before fitting.
    """

    settings: PmeSettings = field(default_factory=PmeSettings)
    lift_mode: LiftMode | None = None
    name: str = "PME"

    def score(self, output: SimOutput) -> FloatArray:
        clouds = _lift_clouds(output.observed.clouds, self.lift_mode)
        d, big_d = output.observed.d, output.observed.D
        out = np.empty(len(clouds))
        for t, (cloud, truth) in enumerate(zip(clouds, output.truth)):
            child = int(np.random.SeedSequence([output.spec.seed, t]).generate_state(1)[0])
            fit = fit_pme_cloud(cloud, d, self.settings, seed=child, workers=1)
            model = drop_model(fit.model, big_d) if self.lift_mode else fit.model
            projector = SplineProjector(model, model.knots, self.settings.projection_starts)
            out[t] = msd_to_truth(projector, truth)
        return out


@dataclass(frozen=True, slots=True)
class LpmeEstimator:
    """Longitudinal fit scored at every visit."""

    settings: LpmeSettings = field(default_factory=lambda: LpmeSettings(workers=1))
    lift_mode: LiftMode | None = None
    name: str = "LPME"

    def score(self, output: SimOutput) -> FloatArray:
        observed = output.observed
        if self.lift_mode is not None:
            observed = LongitudinalCloud(
                observed.times, tuple(_lift_clouds(observed.clouds, self.lift_mode)), observed.d
            )
        model = fit_lpme(observed, self.settings)
        out = np.empty(observed.T)
        for t, (time, truth) in enumerate(zip(observed.times, output.truth)):
            spline = model.spline_at(float(time))
            if self.lift_mode is not None:
                spline = drop_model(spline, output.observed.D)
            projector = SplineProjector(spline, model.grid, self.settings.pme.projection_starts)
            out[t] = msd_to_truth(projector, truth)
        return out


@dataclass(frozen=True, slots=True)
class ExternalEstimator:
    """Results computed elsewhere (e.g. principal curves), keyed by spec."""

    name: str
    results: Mapping[SimSpec, Sequence[float]]

    def score(self, output: SimOutput) -> FloatArray:
        try:
            return np.asarray(self.results[output.spec], dtype=np.float64)
        except KeyError:
            msg = f"no {self.name} result for this combination"
            raise LookupError(msg) from None


def default_estimators() -> tuple[Estimator, ...]:
    return (DataEstimator(), LpmeEstimator(), PmeEstimator())


# ---------------------------------------------------------------------------
# Factorial design
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FactorSets:
    """Factor levels crossed by :func:`run_factorial`."""

    sd_alpha: tuple[float, ...]
    sd_beta: tuple[float, ...]
    sd_zeta: tuple[float, ...]
    duration: tuple[float, ...]
    interval: tuple[float, ...]
    change_model: tuple[ChangeModel, ...] = CHANGE_MODELS
    n_per_time: int = 300
    sd_iota: float = 0.05

    def __post_init__(self) -> None:
        for name in ("sd_alpha", "sd_beta", "sd_zeta", "duration", "interval", "change_model"):
            if not getattr(self, name):
                msg = f"{name} must be nonempty"
                raise ValueError(msg)

    @classmethod
    def full(cls) -> FactorSets:
        """The full design: 7,776 combinations per case."""
        levels = (0.0, 0.05, 0.1, 0.25, 0.5, 1.0)
        return cls(levels, levels, levels, (1.0, 2.0, 5.0), (0.1, 0.25, 0.5), n_per_time=1000)

    @classmethod
    def desk(cls) -> FactorSets:
        """A scaled-down design that runs in minutes."""
        levels = (0.0, 0.25, 1.0)
        return cls(levels, levels, levels, (1.0,), (0.25,), n_per_time=300)

    @property
    def size(self) -> int:
        return (
            len(self.sd_alpha)
            * len(self.sd_beta)
            * len(self.sd_zeta)
            * len(self.duration)
            * len(self.interval)
            * len(self.change_model)
        )

    def combinations(self, case: int, seed: int) -> list[SimSpec]:
        """Every spec for one case; each gets seed SeedSequence([seed, case, i])."""
        grid = itertools.product(
            self.sd_alpha,
            self.sd_beta,
            self.sd_zeta,
            self.duration,
            self.interval,
            self.change_model,
        )
        specs = []
        for index, (sa, sb, sz, dur, gap, model) in enumerate(grid):
            child = int(np.random.SeedSequence([seed, case, index]).generate_state(1)[0])
            specs.append(
                SimSpec(
                    case=case,
                    sd_alpha=sa,
                    sd_beta=sb,
                    sd_zeta=sz,
                    duration=dur,
                    interval=gap,
                    change_model=model,
                    n_per_time=self.n_per_time,
                    sd_iota=self.sd_iota,
                    seed=child,
                )
            )
        return specs


@dataclass(frozen=True, slots=True)
class FactorialRow:
    """One combination: mean MSD-to-truth per estimator, or why it is missing."""

    index: int
    spec: SimSpec
    scores: dict[str, float]
    missing: dict[str, str] = field(default_factory=dict)


def _run_combination(
    estimators: Sequence[Estimator], item: tuple[int, SimSpec]
) -> FactorialRow:
    index, spec = item
    output = generate(spec)
    scores: dict[str, float] = {}
    missing: dict[str, str] = {}
    for estimator in estimators:
        try:
            scores[estimator.name] = float(np.mean(estimator.score(output)))
        except Exception as exc:
            scores[estimator.name] = float("nan")
            missing[estimator.name] = f"{type(exc).__name__}: {exc}"
            logger.warning(
                "case %d #%d: %s failed: %s", spec.case, index, estimator.name, exc
            )
    return FactorialRow(index, spec, scores, missing)


def run_factorial(
    cases: Iterable[int],
    factor_sets: FactorSets,
    estimators: Sequence[Estimator] | None = None,
    seed: int = 0,
    *,
    workers: int = 0,
    backend: BackendType = "thread",
    progress: bool | str = False,
) -> list[FactorialRow]:
    """Run every factor combination for every case.

    Combinations run in parallel; rows come back in (case, index) order.
    A failing estimator leaves a NaN score with its reason in ``missing``.
    """
    chosen = tuple(estimators) if estimators is not None else default_estimators()
    names = [e.name for e in chosen]
    if len(set(names)) != len(names):
        msg = f"estimator names must be unique, got {names}"
        raise ValueError(msg)
    items: list[tuple[int, SimSpec]] = []
    for case in cases:
        get_case(case)
        items.extend(enumerate(factor_sets.combinations(case, seed)))
    logger.info("running %d combinations x %d estimators", len(items), len(chosen))
    task = functools.partial(_run_combination, chosen)
    results = pmap(
        task, items, workers=workers, backend=backend, on_error="collect", progress=progress
    )
    rows = []
    for (index, spec), result in zip(items, results):
        if result.is_ok():
            rows.append(result.value)
        else:
            reason = f"{type(result.exception).__name__}: {result.exception}"
            rows.append(
                FactorialRow(
                    index,
                    spec,
                    {n: float("nan") for n in names},
                    {n: reason for n in names},
                )
            )
    return rows


@dataclass(frozen=True, slots=True)
class SummaryRow:
    """Per-case, per-estimator summary over combinations."""

    case: int
    estimator: str
    n: int
    median: float
    iqr: float
    mean: float
    sd: float


def summarize(rows: Sequence[FactorialRow]) -> list[SummaryRow]:
    """Median/IQR and mean/SD of each estimator's scores per case.

    Missing (NaN) cells are excluded; ``n`` counts the cells used.
    """
    out: list[SummaryRow] = []
    cases = sorted({r.spec.case for r in rows})
    names: list[str] = []
    for r in rows:
        names.extend(n for n in r.scores if n not in names)
    for case in cases:
        for name in names:
            values = np.array(
                [r.scores.get(name, np.nan) for r in rows if r.spec.case == case]
            )
            values = values[np.isfinite(values)]
            if values.size == 0:
                nan = float("nan")
                out.append(SummaryRow(case, name, 0, nan, nan, nan, nan))
                continue
            q1, med, q3 = np.percentile(values, [25, 50, 75])
            sd = float(np.std(values, ddof=1)) if values.size > 1 else float("nan")
            out.append(
                SummaryRow(
                    case, name, int(values.size), float(med), float(q3 - q1),
                    float(np.mean(values)), sd,
                )
            )
    return out
