"""Command-line front end: ``lpmkit simulate|fit|evaluate|volume|lift``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Settings are layered as command-line flag > ``--config`` TOML section named
after the subcommand > built-in default.
"""

from __future__ import annotations

import argparse
import logging
import math
import shlex
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from lpmkit import __version__
from lpmkit._config import (
    LpmeSettings,
    PmeSettings,
    exp_grid,
    load_config_file,
    merge_layers,
)
from lpmkit._errors import (
    ConfigError,
    LpmkitError,
    LpmkitWarning,
    SolverError,
    StageError,
    WatertightError,
)
from lpmkit._io import (
    PmeSeries,
    SavedModel,
    cloud_columns,
    header_lines,
    load_model,
    read_cloud_table,
    save_model,
    write_cloud,
    write_delimited,
)
from lpmkit.augment import LiftSpec, drop, drop_model, lift, standardize
from lpmkit.core import LongitudinalCloud, LongitudinalModel
from lpmkit.lpme import cross_sections, estimate_volume, fit_lpme, volume_variability
from lpmkit.pme import fit_pme_cloud, msd
from lpmkit.sim import (
    DataEstimator,
    FactorSets,
    LpmeEstimator,
    PmeEstimator,
    SimSpec,
    generate,
    run_factorial,
    summarize,
)

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from lpmkit._types import FloatArray
    from lpmkit.core import SplineModel
    from lpmkit.sim import Estimator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_SIMULATE = {
    "case": 1,
    "seed": 0,
    "sd_alpha": 0.0,
    "sd_beta": 0.0,
    "sd_zeta": 0.0,
    "duration": 1.0,
    "interval": 0.25,
    "change_model": "constant",
    "n_per_time": 300,
    "sd_iota": 0.05,
    "factorial": None,
    "cases": "1,5,8",
    "estimators": "data,lpme,pme",
    "lift": None,
    "summary": None,
    "progress": False,
}

_FIT = {
    "projection_starts": 4,
    "d": 1,
    "mode": "lpme",
    "seed": 0,
    "gamma": None,
    "gamma_min": -10,
    "gamma_max": 10,
    "lambda_min": -15,
    "lambda_max": 5,
    "eps": 1e-3,
    "itr": 100,
    "neighbors": None,
    "cv_folds": None,
    "grid_size": None,
    "backend": "thread",
    "lift": None,
    "lift_scale": 1.0,
    "report": None,
}

_EVALUATE = {
    "projection_starts": 4,
    "truth": None,
    "export_sections": None,
    "section_axis": 0,
    "section_values": "0.0",
    "section_resolution": 100,
}

_VOLUME = {
    "voxel": None,
    "times": None,
    "resolution": 60,
}

_LIFT = {
    "mode": None,
    "scale": 1.0,
    "center": None,
    "standardize": False,
    "drop": None,
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": _SIMULATE,
    "fit": _FIT,
    "evaluate": _EVALUATE,
    "volume": _VOLUME,
    "lift": _LIFT,
}


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Resolved settings for one subcommand.

    Attributes:
        command: Subcommand name.
        values: Every setting of the subcommand after layering.
        workers: Thread budget for library calls (0 = auto).
        command_line: The invocation, recorded in output headers.
    """

    command: str
    values: Mapping[str, Any]
    workers: int
    command_line: str

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def header(self, seed: int | None = None) -> list[str]:
        return header_lines(__version__, self.command_line, seed)


def resolve_config(args: argparse.Namespace, argv: Sequence[str]) -> RunConfig:
    """Layer flags over the config file over the defaults.

    Raises:
        ConfigError: On unknown keys or an unreadable config file.
    """
    defaults = DEFAULTS[args.command]
    file_values: dict[str, Any] = {}
    if args.config is not None:
        file_values = load_config_file(Path(args.config)).get(args.command, {})
    values = merge_layers(defaults, file_values, vars(args))
    threads = args.threads or 0
    if threads < 0:
        msg = f"--threads must be >= 0, got {threads}"
        raise ConfigError(msg)
    return RunConfig(args.command, values, threads, shlex.join(["lpmkit", *argv]))


def _split(value: Any, kind: type, name: str) -> list[Any]:
    """Parse a comma list from a flag, or accept a TOML array."""
    items = value.split(",") if isinstance(value, str) else list(value)
    try:
        return [kind(v) for v in items if not isinstance(v, str) or v.strip()]
    except (TypeError, ValueError):
        msg = f"{name} must be a comma-separated list of {kind.__name__} values, got {value!r}"
        raise ConfigError(msg) from None


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _estimators(config: RunConfig) -> list[Estimator]:
    lift_mode = config["lift"]
    available: dict[str, Estimator] = {
        "data": DataEstimator(),
        "pme": PmeEstimator(lift_mode=lift_mode),
        "lpme": LpmeEstimator(lift_mode=lift_mode),
    }
    names = [n.strip() for n in _split(config["estimators"], str, "estimators")]
    unknown = sorted(set(names) - set(available))
    if unknown:
        msg = f"unknown estimators: {', '.join(unknown)} (expected data, lpme, pme)"
        raise ConfigError(msg)
    return [available[n] for n in names]


def cmd_simulate(config: RunConfig, output: Path) -> int:
    """Write one simulated data set, or the factorial result table."""
    seed = int(config["seed"])
    preset = config["factorial"]
    if preset is None:
        spec = SimSpec(
            case=int(config["case"]),
            sd_alpha=float(config["sd_alpha"]),
            sd_beta=float(config["sd_beta"]),
            sd_zeta=float(config["sd_zeta"]),
            duration=float(config["duration"]),
            interval=float(config["interval"]),
            change_model=config["change_model"],
            n_per_time=int(config["n_per_time"]),
            sd_iota=float(config["sd_iota"]),
            seed=seed,
        )
        out = generate(spec)
        write_cloud(output, out.observed, config.header(seed), truth=out.truth)
        logger.info("wrote %d visits to %s", out.observed.T, output)
        return EXIT_OK

    if preset not in ("desk", "full"):
        msg = f"factorial must be 'desk' or 'full', got {preset!r}"
        raise ConfigError(msg)
    factors = FactorSets.desk() if preset == "desk" else FactorSets.full()
    estimators = _estimators(config)
    rows = run_factorial(
        _split(config["cases"], int, "cases"),
        factors,
        estimators,
        seed,
        workers=config.workers,
        progress="factorial" if config["progress"] else False,
    )
    names = [e.name for e in estimators]
    factor_names = ["sd_alpha", "sd_beta", "sd_zeta", "duration", "interval", "change_model"]
    write_delimited(
        output,
        config.header(seed),
        ["case", "index", *factor_names, *names, "missing"],
        (
            [
                row.spec.case,
                row.index,
                *(getattr(row.spec, f) for f in factor_names),
                *(row.scores[n] for n in names),
                "; ".join(f"{n}: {row.missing[n]}" for n in names if n in row.missing),
            ]
            for row in rows
        ),
    )
    if config["summary"] is not None:
        write_delimited(
            Path(config["summary"]),
            config.header(seed),
            ["case", "estimator", "n", "median", "iqr", "mean", "sd"],
            ([s.case, s.estimator, s.n, s.median, s.iqr, s.mean, s.sd] for s in summarize(rows)),
        )
    logger.info("wrote %d factorial rows to %s", len(rows), output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit / evaluate
# ---------------------------------------------------------------------------


def _spline_for(saved: SavedModel, t: float) -> tuple[SplineModel, FloatArray]:
    """The spline used at time t (angle coordinates dropped) and its seeds."""
    model = saved.model
    spline = model.spline_at(t)
    seeds = model.grid if isinstance(model, LongitudinalModel) else spline.knots
    if saved.lift is not None and saved.original_dim is not None:
        spline = drop_model(spline, saved.original_dim)
    return spline, seeds


def _output_dim(saved: SavedModel) -> int:
    return saved.original_dim if saved.original_dim is not None else saved.model.D


def per_time_msd(
    saved: SavedModel, clouds: Mapping[float, np.ndarray], starts: int | None
) -> dict[float, float]:
    """Data MSD of a saved model at every time in ``clouds``.

    Raises:
        ValueError: If the clouds and the model disagree on dimension.
    """
    out: dict[float, float] = {}
    for t, cloud in clouds.items():
        if cloud.shape[1] != _output_dim(saved):
            msg = (
                f"model outputs {_output_dim(saved)} coordinates but the cloud has "
                f"{cloud.shape[1]}"
            )
            raise ValueError(msg)
        spline, seeds = _spline_for(saved, t)
        out[t] = msd(spline, cloud, seeds, starts)
    return out


def _settings(config: RunConfig) -> LpmeSettings:
    pme = PmeSettings(
        lambda_grid=exp_grid(int(config["lambda_min"]), int(config["lambda_max"])),
        eps=float(config["eps"]),
        itr=int(config["itr"]),
        projection_starts=config["projection_starts"],
        neighbors=config["neighbors"],
    )
    gamma = config["gamma"]
    return LpmeSettings(
        pme=pme,
        gamma_grid=exp_grid(int(config["gamma_min"]), int(config["gamma_max"])),
        gamma=None if gamma is None else float(gamma),
        cv_folds=config["cv_folds"],
        grid_size=config["grid_size"],
        workers=config.workers,
        backend=config["backend"],
        seed=int(config["seed"]),
    )


def _fit_pme_series(data: LongitudinalCloud, settings: LpmeSettings) -> PmeSeries:
    fits = []
    for t, cloud in enumerate(data.clouds):
        child = int(np.random.SeedSequence([settings.seed, t]).generate_state(1)[0])
        fits.append(
            fit_pme_cloud(
                cloud,
                data.d,
                settings.pme,
                seed=child,
                workers=settings.workers,
                backend=settings.backend,
            )
        )
    return PmeSeries(
        data.times,
        tuple(f.model for f in fits),
        np.array([f.lambda_star for f in fits]),
        np.array([f.tau for f in fits]),
    )


def cmd_fit(config: RunConfig, source: Path, output: Path) -> int:
    """Fit LPME (or per-time PME) and write the model and a metrics report."""
    if config["mode"] not in ("lpme", "pme"):
        msg = f"mode must be 'lpme' or 'pme', got {config['mode']!r}"
        raise ConfigError(msg)
    settings = _settings(config)
    data = read_cloud_table(source).observed(int(config["d"]))

    spec: LiftSpec | None = None
    fit_data = data
    if config["lift"] is not None:
        spec = LiftSpec.about_centroid(
            np.vstack(data.clouds), config["lift"], float(config["lift_scale"])
        )
        fit_data = LongitudinalCloud(
            data.times, tuple(lift(c, spec) for c in data.clouds), data.d
        )

    model: LongitudinalModel | PmeSeries
    if config["mode"] == "lpme":
        model = fit_lpme(fit_data, settings)
    else:
        model = _fit_pme_series(fit_data, settings)
    saved = SavedModel(model, spec, data.D if spec is not None else None)
    save_model(output, saved)

    clouds = {float(t): c for t, c in zip(data.times, data.clouds)}
    per_time = per_time_msd(saved, clouds, settings.pme.projection_starts)
    footer = [f"# overall_msd {_fmt(float(np.mean(list(per_time.values()))))}"]
    if isinstance(model, LongitudinalModel):
        footer.append(f"# gamma_star {_fmt(model.gamma_star)}")
    report = Path(config["report"]) if config["report"] else output.with_suffix(".report.csv")
    write_delimited(
        report,
        config.header(settings.seed),
        ["t", "tau", "lambda", "msd"],
        (
            [float(t), float(model.tau[i]), float(model.lambdas[i]), per_time[float(t)]]
            for i, t in enumerate(data.times)
        ),
        footer,
    )
    logger.info("wrote model to %s and report to %s", output, report)
    return EXIT_OK


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else repr(float(value))


def _truth_clouds(path: Path) -> dict[float, np.ndarray]:
    table = read_cloud_table(path)
    mask = table.truth if table.truth.any() else np.ones(table.times.shape[0], dtype=bool)
    times, clouds = table.group(mask)
    return {float(t): c for t, c in zip(times, clouds)}


def cmd_evaluate(config: RunConfig, model_path: Path, source: Path, output: Path) -> int:
    """Per-time MSD (and MSD to truth) of a saved model on a cloud file."""
    saved = load_model(model_path)
    table = read_cloud_table(source)
    times, clouds = table.group(~table.truth)
    observed = {float(t): c for t, c in zip(times, clouds)}
    starts = config["projection_starts"]
    per_time = per_time_msd(saved, observed, starts)

    truth: dict[float, np.ndarray] = {}
    if config["truth"] is not None:
        truth = _truth_clouds(Path(config["truth"]))
        if not truth:
            warnings.warn(
                f"truth file {config['truth']} has no rows; msd_truth omitted",
                LpmkitWarning,
                stacklevel=2,
            )
    elif table.truth.any():
        truth = table.truth_by_time()
    truth_msd = per_time_msd(saved, {t: truth[t] for t in observed if t in truth}, starts)

    columns = ["t", "msd", *(["msd_truth"] if truth else [])]
    rows = [
        [t, per_time[t], *([truth_msd.get(t, float("nan"))] if truth else [])]
        for t in observed
    ]
    footer = [f"# overall_msd {_fmt(float(np.mean(list(per_time.values()))))}"]
    if truth_msd:
        footer.append(f"# overall_msd_truth {_fmt(float(np.mean(list(truth_msd.values()))))}")
    write_delimited(output, config.header(), columns, rows, footer)

    if config["export_sections"] is not None:
        _export_sections(config, saved, list(observed), Path(config["export_sections"]))
    return EXIT_OK


def _export_sections(
    config: RunConfig, saved: SavedModel, times: list[float], path: Path
) -> None:
    if not isinstance(saved.model, LongitudinalModel):
        msg = "cross-sections need an lpme model"
        raise ValueError(msg)
    axis = int(config["section_axis"])
    values = _split(config["section_values"], float, "section_values")
    dim = _output_dim(saved)
    rows: list[list[Any]] = []
    for t in times:
        sections = cross_sections(
            saved.model, t, axis, values, int(config["section_resolution"])
        )
        for value, segments in zip(values, sections):
            for k, segment in enumerate(segments):
                for end, point in enumerate(segment):
                    rows.append([t, value, k, end, *map(float, point[:dim])])
    write_delimited(
        path,
        config.header(),
        ["t", "value", "segment", "end", *cloud_columns(dim, with_truth=False)[1:]],
        rows,
    )


# ---------------------------------------------------------------------------
# volume / lift
# ---------------------------------------------------------------------------


def cmd_volume(config: RunConfig, model_path: Path, output: Path) -> int:
    """Volume trajectory of a d=2 longitudinal surface."""
    if config["voxel"] is None:
        msg = "volume needs --voxel"
        raise ConfigError(msg)
    voxel = float(config["voxel"])
    saved = load_model(model_path)
    model = saved.model
    if not isinstance(model, LongitudinalModel) or model.d != 2:
        msg = "volume needs an lpme model with d=2"
        raise ValueError(msg)
    times = (
        [float(t) for t in model.times]
        if config["times"] is None
        else _split(config["times"], float, "times")
    )
    lifted = saved.lift
    spherical = lifted if lifted is not None and lifted.mode == "spherical" else None

    rows: list[list[Any]] = []
    for t in times:
        try:
            volume = estimate_volume(
                model, t, voxel, int(config["resolution"]), lift=spherical
            )
        except WatertightError as exc:
            logger.warning("t=%g: %s", t, exc)
            rows.append([t, float("nan"), 0])
        else:
            rows.append([t, volume, 1])
    good = [(t, v) for t, v, ok in rows if ok]
    sd, adjusted = volume_variability(
        np.array([t for t, _ in good]), np.array([v for _, v in good])
    )
    write_delimited(
        output,
        config.header(),
        ["t", "volume", "watertight"],
        rows,
        [f"# sd {_fmt(sd)}", f"# regression_adjusted_sd {_fmt(adjusted)}"],
    )
    return EXIT_OK


def cmd_lift(config: RunConfig, source: Path, output: Path) -> int:
    """Append angle coordinates to every row, or drop trailing coordinates."""
    table = read_cloud_table(source)
    points = table.points
    if config["drop"] is not None:
        points = drop(points, int(config["drop"]))
    else:
        if config["mode"] is None:
            msg = "lift needs --mode (or --drop)"
            raise ConfigError(msg)
        if config["standardize"]:
            points, _ = standardize(points)
        center = config["center"]
        spec = LiftSpec(
            config["mode"],
            float(config["scale"]),
            None if center is None else tuple(_split(center, float, "center")),
        )
        points = lift(points, spec)

    flags = [[int(f)] for f in table.truth] if table.flagged else [[] for _ in table.truth]
    write_delimited(
        output,
        config.header(),
        cloud_columns(points.shape[1], table.flagged),
        ([float(t), *map(float, p), *f] for t, p, f in zip(table.times, points, flags)),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpmkit", description="Longitudinal principal manifold estimation."
    )
    parser.add_argument("--version", action="version", version=f"lpmkit {__version__}")
    parser.add_argument("--config", metavar="PATH", help="TOML file with per-command tables")
    parser.add_argument("--threads", type=int, help="worker threads (default: LPMKIT_THREADS)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a simulated data set or run a factorial")
    p.add_argument("output", type=Path)
    p.add_argument("--case", type=int)
    p.add_argument("--seed", type=int)
    for name in ("sd-alpha", "sd-beta", "sd-zeta", "duration", "interval", "sd-iota"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--change-model", choices=("constant", "linear", "quadratic", "sinusoidal"))
    p.add_argument("--n-per-time", type=int)
    p.add_argument("--factorial", choices=("desk", "full"))
    p.add_argument("--cases", help="comma list of cases for --factorial")
    p.add_argument("--estimators", help="comma list from data,lpme,pme")
    p.add_argument("--lift", choices=("polar", "spherical"))
    p.add_argument("--summary", help="also write per-case summaries here")
    p.add_argument("--progress", action="store_true", default=None)

    p = sub.add_parser("fit", help="fit a model to a cloud file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--d", type=int)
    p.add_argument("--mode", choices=("lpme", "pme"))
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma", type=float, help="fixed temporal smoothing (skips tuning)")
    for name in ("gamma-min", "gamma-max", "lambda-min", "lambda-max"):
        p.add_argument(f"--{name}", type=int, help="exponent of the e^k grid end")
    p.add_argument("--eps", type=float)
    p.add_argument("--itr", type=int)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--cv-folds", type=int)
    p.add_argument("--grid-size", type=int)
    p.add_argument("--projection-starts", type=int)
    p.add_argument("--backend", choices=("auto", "thread", "process"))
    p.add_argument("--lift", choices=("polar", "spherical"))
    p.add_argument("--lift-scale", type=float)
    p.add_argument("--report", help="metrics report path (default: <output>.report.csv)")

    p = sub.add_parser("evaluate", help="score a saved model on a cloud file")
    p.add_argument("model", type=Path)
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--truth", help="cloud file with noise-free points")
    p.add_argument("--projection-starts", type=int)
    p.add_argument("--export-sections", help="write cross-section segments here")
    p.add_argument("--section-axis", type=int)
    p.add_argument("--section-values", help="comma list of slice positions")
    p.add_argument("--section-resolution", type=int)

    p = sub.add_parser("volume", help="volume trajectory of a d=2 model")
    p.add_argument("model", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--voxel", type=float)
    p.add_argument("--times", help="comma list (default: the fitted times)")
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("lift", help="append angle coordinates to a cloud file")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--mode", choices=("polar", "spherical"))
    p.add_argument("--scale", type=float)
    p.add_argument("--center", help="comma list of coordinates (default: centroid)")
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--drop", type=int, help="keep only the first D coordinates")
    return parser


def exit_code(exc: BaseException) -> int:
    """2 for usage and input problems, 3 for numerical failures."""
    while isinstance(exc, StageError):
        exc = exc.original
    if isinstance(exc, SolverError | WatertightError | ArithmeticError | np.linalg.LinAlgError):
        return EXIT_NUMERICAL
    return EXIT_USAGE


def _dispatch(config: RunConfig, args: argparse.Namespace) -> int:
    if args.command == "simulate":
        return cmd_simulate(config, args.output)
    if args.command == "fit":
        return cmd_fit(config, args.input, args.output)
    if args.command == "evaluate":
        return cmd_evaluate(config, args.model, args.input, args.output)
    if args.command == "volume":
        return cmd_volume(config, args.model, args.output)
    return cmd_lift(config, args.input, args.output)


def main(argv: Sequence[str] | None = None) -> int:
    arguments = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(arguments)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = resolve_config(args, arguments)
        return _dispatch(config, args)
    except (LpmkitError, ValueError, LookupError, OSError, ArithmeticError) as exc:
        logger.debug("command failed", exc_info=True)
        sys.stderr.write(f"lpmkit: error: {exc}\n")
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
