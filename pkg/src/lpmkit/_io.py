"""File formats: delimited clouds and tables, JSON model files.

Delimited files are UTF-8, comma separated, LF terminated, with ``#``
comment lines on top (tool version, command line, seed). Model files are
JSON with every float stored as a hexadecimal string so reloading is
bit-exact.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from lpmkit._errors import FormatError
from lpmkit.augment import LiftSpec
from lpmkit.core import LongitudinalCloud, LongitudinalModel, SplineModel
from lpmkit.lpme import TemporalSpline

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from pathlib import Path

    from lpmkit._types import FloatArray

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def header_lines(version: str, command: str, seed: int | None) -> list[str]:
    lines = [f"# lpmkit {version}", f"# command: {command}"]
    if seed is not None:
        lines.append(f"# seed: {seed}")
    return lines


def format_float(value: float) -> str:
    """Shortest round-tripping decimal; 'nan' for missing values."""
    return "nan" if math.isnan(value) else repr(float(value))


def write_delimited(
    path: Path,
    header: Sequence[str],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    footer: Sequence[str] = (),
) -> None:
    """Write comment header, column names, rows and comment footer."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(f"{line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                format_float(v) if isinstance(v, float | np.floating) else v for v in row
            )
        for line in footer:
            fh.write(f"{line}\n")


# ---------------------------------------------------------------------------
# Clouds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CloudTable:
    """Raw rows of a cloud file.

    Attributes:
        times: (n,) time stamp per row.
        points: (n, D) coordinates.
        truth: (n,) True for noise-free truth rows.
        flagged: Whether the file carried a truth column.
    """

    times: FloatArray
    points: FloatArray
    truth: np.ndarray
    flagged: bool = False

    @property
    def D(self) -> int:  # noqa: N802
        return int(self.points.shape[1])

    def group(self, mask: np.ndarray) -> tuple[FloatArray, tuple[FloatArray, ...]]:
        times = self.times[mask]
        points = self.points[mask]
        unique = np.unique(times)
        return unique, tuple(points[times == t] for t in unique)

    def observed(self, d: int) -> LongitudinalCloud:
        """Non-truth rows grouped by time."""
        times, clouds = self.group(~self.truth)
        return LongitudinalCloud(times, clouds, d)

    def truth_by_time(self) -> dict[float, FloatArray]:
        times, clouds = self.group(self.truth)
        return {float(t): c for t, c in zip(times, clouds)}


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        msg = f"column {column!r}: not a number: {text!r}"
        raise FormatError(msg, line=line) from None
    if not math.isfinite(value):
        msg = f"column {column!r}: non-finite value {text!r}"
        raise FormatError(msg, line=line)
    return value


def read_cloud_table(path: Path) -> CloudTable:
    """Parse a cloud file with columns ``t, x1..xD[, truth]``.

    Raises:
        FormatError: On a missing header or a malformed row, with its
            1-based line number.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        msg = f"cannot read {path}: {exc}"
        raise FormatError(msg) from exc

    columns: list[str] | None = None
    times: list[float] = []
    points: list[list[float]] = []
    truth: list[bool] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        fields = next(csv.reader([raw]))
        fields = [f.strip() for f in fields]
        if columns is None:
            columns = fields
            _check_columns(columns, lineno)
            continue
        if len(fields) != len(columns):
            msg = f"expected {len(columns)} fields, got {len(fields)}"
            raise FormatError(msg, line=lineno)
        times.append(_parse_float(fields[0], lineno, "t"))
        has_flag = columns[-1] == "truth"
        coords = fields[1:-1] if has_flag else fields[1:]
        names = columns[1:-1] if has_flag else columns[1:]
        points.append([_parse_float(v, lineno, n) for v, n in zip(coords, names)])
        if has_flag:
            if fields[-1] not in ("0", "1"):
                msg = f"column 'truth' must be 0 or 1, got {fields[-1]!r}"
                raise FormatError(msg, line=lineno)
            truth.append(fields[-1] == "1")
        else:
            truth.append(False)

    if columns is None:
        msg = f"{path}: missing column header"
        raise FormatError(msg)
    width = len(columns) - 1 - (columns[-1] == "truth")
    logger.debug("read %d rows from %s", len(times), path)
    return CloudTable(
        np.array(times, dtype=np.float64),
        np.array(points, dtype=np.float64).reshape(-1, width),
        np.array(truth, dtype=bool),
        flagged=columns[-1] == "truth",
    )


def _check_columns(columns: list[str], line: int) -> None:
    names = columns[:-1] if columns and columns[-1] == "truth" else columns
    expected = ["t", *(f"x{i}" for i in range(1, len(names)))]
    if len(names) < 2 or names != expected:
        msg = f"header must be t,x1..xD[,truth], got {','.join(columns)}"
        raise FormatError(msg, line=line)


def cloud_columns(big_d: int, with_truth: bool) -> list[str]:
    cols = ["t", *(f"x{i}" for i in range(1, big_d + 1))]
    return [*cols, "truth"] if with_truth else cols


def write_cloud(
    path: Path,
    data: LongitudinalCloud,
    header: Sequence[str],
    truth: Sequence[FloatArray] | None = None,
) -> None:
    """Write observed rows (and truth rows flagged 1) time by time."""
    rows: list[list[Any]] = []
    for i, t in enumerate(data.times):
        for p in data.clouds[i]:
            rows.append([float(t), *map(float, p), *([0] if truth is not None else [])])
        if truth is not None:
            rows.extend([float(t), *map(float, p), 1] for p in truth[i])
    write_delimited(path, header, cloud_columns(data.D, truth is not None), rows)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def _hex(values: Any) -> Any:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr).hex()
    return [_hex(v) for v in arr]


def _unhex(values: Any) -> Any:
    if isinstance(values, str):
        return float.fromhex(values)
    return [_unhex(v) for v in values]


def _array(payload: dict[str, Any], key: str) -> FloatArray:
    try:
        return np.array(_unhex(payload[key]), dtype=np.float64)
    except KeyError:
        msg = f"model file is missing {key!r}"
        raise FormatError(msg) from None
    except (TypeError, ValueError) as exc:
        msg = f"model field {key!r} is malformed: {exc}"
        raise FormatError(msg) from None


@dataclass(frozen=True, slots=True)
class PmeSeries:
    """Independent per-time PME fits, stored like a longitudinal model."""

    times: FloatArray
    fits: tuple[SplineModel, ...]
    lambdas: FloatArray
    tau: FloatArray

    @property
    def d(self) -> int:
        return self.fits[0].d

    @property
    def D(self) -> int:  # noqa: N802
        return self.fits[0].D

    def spline_at(self, t: float) -> SplineModel:
        """The fit observed at time t (times must match exactly)."""
        idx = np.flatnonzero(self.times == t)
        if idx.size == 0:
            msg = f"no per-time fit at t={t!r}"
            raise ValueError(msg)
        return self.fits[int(idx[0])]

    def seeds_at(self, t: float) -> FloatArray:
        return self.spline_at(t).knots


@dataclass(frozen=True, slots=True)
class SavedModel:
    """A model file: the fitted model plus the lift used before fitting."""

    model: LongitudinalModel | PmeSeries
    lift: LiftSpec | None = None
    original_dim: int | None = None


def _spline_dict(model: SplineModel) -> dict[str, Any]:
    return {"knots": _hex(model.knots), "s": _hex(model.s), "alpha": _hex(model.alpha)}


def model_to_dict(saved: SavedModel) -> dict[str, Any]:
    model = saved.model
    out: dict[str, Any] = {"format_version": FORMAT_VERSION}
    if isinstance(model, LongitudinalModel):
        spline = model.temporal_spline
        out.update(
            kind="lpme",
            d=model.d,
            D=model.D,
            grid=_hex(model.grid),
            coefficients=_hex(model.coefficients),
            times=_hex(model.times),
            tau=_hex(model.tau),
            weights=_hex(model.weights),
            lambdas=_hex(model.lambdas),
            gamma_star=_hex(model.gamma_star),
            msd_table=[[_hex(g), _hex(v)] for g, v in model.msd_table],
            temporal={
                "times": _hex(spline.times),
                "delta": _hex(spline.delta),
                "nu": _hex(spline.nu),
                "gamma": _hex(spline.gamma),
                "weights": _hex(spline.weights),
            },
        )
    else:
        out.update(
            kind="pme",
            d=model.d,
            D=model.D,
            times=_hex(model.times),
            lambdas=_hex(model.lambdas),
            tau=_hex(model.tau),
            fits=[_spline_dict(f) for f in model.fits],
        )
    if saved.lift is not None:
        out["lift"] = {
            "mode": saved.lift.mode,
            "scale": _hex(saved.lift.scale),
            "center": None if saved.lift.center is None else _hex(saved.lift.center),
            "original_dim": saved.original_dim,
        }
    return out


def model_from_dict(payload: dict[str, Any]) -> SavedModel:
    """Rebuild a saved model.

    Raises:
        FormatError: On an unknown version or kind, or missing fields.
    """
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        msg = f"unsupported format_version {version!r} (expected {FORMAT_VERSION})"
        raise FormatError(msg)
    kind = payload.get("kind")
    model: LongitudinalModel | PmeSeries
    if kind == "lpme":
        temporal = payload.get("temporal")
        if not isinstance(temporal, dict):
            msg = "model file is missing 'temporal'"
            raise FormatError(msg)
        spline = TemporalSpline(
            _array(temporal, "times"),
            _array(temporal, "delta"),
            _array(temporal, "nu"),
            float(_array(temporal, "gamma")),
            _array(temporal, "weights"),
        )
        model = LongitudinalModel(
            grid=_array(payload, "grid"),
            coefficients=_array(payload, "coefficients"),
            times=_array(payload, "times"),
            tau=_array(payload, "tau"),
            weights=_array(payload, "weights"),
            lambdas=_array(payload, "lambdas"),
            gamma_star=float(_array(payload, "gamma_star")),
            temporal_spline=spline,
            msd_table=tuple(
                (float.fromhex(g), float.fromhex(v)) for g, v in payload.get("msd_table", [])
            ),
        )
    elif kind == "pme":
        fits = tuple(
            SplineModel(_array(f, "knots"), _array(f, "s"), _array(f, "alpha"))
            for f in payload.get("fits", [])
        )
        if not fits:
            msg = "model file has no per-time fits"
            raise FormatError(msg)
        model = PmeSeries(
            _array(payload, "times"), fits, _array(payload, "lambdas"), _array(payload, "tau")
        )
    else:
        msg = f"unknown model kind {kind!r}"
        raise FormatError(msg)

    lift_info = payload.get("lift")
    if lift_info is None:
        return SavedModel(model)
    center = lift_info.get("center")
    spec = LiftSpec(
        lift_info["mode"],
        float.fromhex(lift_info["scale"]),
        None if center is None else tuple(_unhex(center)),
    )
    return SavedModel(model, spec, int(lift_info["original_dim"]))


def save_model(path: Path, saved: SavedModel) -> None:
    path.write_text(json.dumps(model_to_dict(saved), indent=1) + "\n", encoding="utf-8")


def load_model(path: Path) -> SavedModel:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        msg = f"cannot read {path}: {exc}"
        raise FormatError(msg) from exc
    except json.JSONDecodeError as exc:
        msg = f"{path}: invalid JSON: {exc.msg}"
        raise FormatError(msg, line=exc.lineno) from exc
    if not isinstance(payload, dict):
        msg = f"{path}: expected a JSON object"
        raise FormatError(msg)
    return model_from_dict(payload)
