"""Tests for cloud files, result tables and model files."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import numpy as np
import pytest

from lpmkit._errors import FormatError
from lpmkit._io import (
    PmeSeries,
    SavedModel,
    header_lines,
    load_model,
    model_from_dict,
    model_to_dict,
    read_cloud_table,
    save_model,
    write_cloud,
    write_delimited,
)
from lpmkit.augment import LiftSpec
from lpmkit.core import LongitudinalCloud, LongitudinalModel
from lpmkit.pme import solve_penalized_spline
from tests.conftest import constant_model

if TYPE_CHECKING:
    from pathlib import Path

HEADER = header_lines("1.0", "lpmkit simulate out.csv", 7)


def _model() -> LongitudinalModel:
    x = np.linspace(-1.0, 1.0, 7)[:, None]
    return constant_model(x, np.column_stack([x[:, 0], np.sin(3 * x[:, 0]) / 3]), 4)


class TestDelimited:
    """Tests for the delimited writer."""

    def test_layout(self, tmp_path: Path) -> None:
        path = tmp_path / "table.csv"
        write_delimited(path, HEADER, ["t", "msd"], [[0.1, float("nan")], [1, 2.5]], ["# end 1"])
        assert path.read_bytes() == (
            b"# lpmkit 1.0\n# command: lpmkit simulate out.csv\n# seed: 7\n"
            b"t,msd\n0.1,nan\n1,2.5\n# end 1\n"
        )

    def test_header_without_seed(self) -> None:
        assert header_lines("2", "x", None) == ["# lpmkit 2", "# command: x"]


class TestCloudFiles:
    """Tests for reading and writing cloud files."""

    def test_write_then_read(self, tmp_path: Path, rng: np.random.Generator) -> None:
        clouds = (rng.random((4, 3)), rng.random((2, 3)))
        truth = (rng.random((3, 3)), rng.random((1, 3)))
        data = LongitudinalCloud([0.0, 0.5], clouds, 1)
        path = tmp_path / "cloud.csv"
        write_cloud(path, data, HEADER, truth=truth)

        table = read_cloud_table(path)
        assert table.flagged
        assert table.D == 3
        observed = table.observed(1)
        np.testing.assert_array_equal(observed.times, [0.0, 0.5])
        np.testing.assert_array_equal(observed.clouds[0], clouds[0])
        np.testing.assert_array_equal(observed.clouds[1], clouds[1])
        by_time = table.truth_by_time()
        np.testing.assert_array_equal(by_time[0.5], truth[1])

    def test_without_truth_column(self, tmp_path: Path) -> None:
        path = tmp_path / "plain.csv"
        path.write_text("# note\nt,x1,x2\n\n0,1,2\n1,3,4\n0,5,6\n", encoding="utf-8")
        table = read_cloud_table(path)
        assert not table.flagged
        assert not table.truth.any()
        observed = table.observed(1)
        np.testing.assert_array_equal(observed.clouds[0], [[1.0, 2.0], [5.0, 6.0]])

    def test_bad_number_reports_line(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.csv"
        path.write_text("# a\nt,x1,x2\n0,1,2\n0,abc,2\n", encoding="utf-8")
        with pytest.raises(FormatError, match="line 4") as info:
            read_cloud_table(path)
        assert info.value.line == 4

    def test_non_finite_rejected(self, tmp_path: Path) -> None:
        path = tmp_path / "inf.csv"
        path.write_text("t,x1,x2\n0,inf,2\n", encoding="utf-8")
        with pytest.raises(FormatError, match="non-finite"):
            read_cloud_table(path)

    def test_field_count(self, tmp_path: Path) -> None:
        path = tmp_path / "short.csv"
        path.write_text("t,x1,x2\n0,1\n", encoding="utf-8")
        with pytest.raises(FormatError, match="expected 3 fields"):
            read_cloud_table(path)

    def test_bad_header(self, tmp_path: Path) -> None:
        path = tmp_path / "header.csv"
        path.write_text("time,x,y\n0,1,2\n", encoding="utf-8")
        with pytest.raises(FormatError, match="header must be"):
            read_cloud_table(path)

    def test_missing_header(self, tmp_path: Path) -> None:
        path = tmp_path / "empty.csv"
        path.write_text("# only comments\n", encoding="utf-8")
        with pytest.raises(FormatError, match="missing column header"):
            read_cloud_table(path)

    def test_truth_flag_values(self, tmp_path: Path) -> None:
        path = tmp_path / "flag.csv"
        path.write_text("t,x1,x2,truth\n0,1,2,yes\n", encoding="utf-8")
        with pytest.raises(FormatError, match="0 or 1"):
            read_cloud_table(path)

    def test_unreadable(self, tmp_path: Path) -> None:
        with pytest.raises(FormatError, match="cannot read"):
            read_cloud_table(tmp_path / "missing.csv")


class TestModelFiles:
    """Tests for JSON model files."""

    def test_lpme_reload_is_bit_exact(self, tmp_path: Path) -> None:
        model = _model()
        path = tmp_path / "model.json"
        save_model(path, SavedModel(model))
        loaded = load_model(path).model
        assert isinstance(loaded, LongitudinalModel)
        np.testing.assert_array_equal(loaded.coefficients, model.coefficients)
        np.testing.assert_array_equal(loaded.temporal_spline.delta, model.temporal_spline.delta)
        assert loaded.gamma_star == model.gamma_star
        r = np.array([[0.123], [-0.77]])
        np.testing.assert_array_equal(
            loaded.spline_at(1.3).evaluate(r), model.spline_at(1.3).evaluate(r)
        )

    def test_pme_series(self, tmp_path: Path) -> None:
        knots = np.linspace(0.0, 1.0, 5)[:, None]
        fits = tuple(
            solve_penalized_spline(knots, np.column_stack([knots[:, 0], k * knots[:, 0] ** 2]), None, 0.0)
            for k in (1.0, 2.0)
        )
        series = PmeSeries(np.array([0.0, 1.0]), fits, np.array([0.1, 0.2]), np.array([0.01, 0.02]))
        path = tmp_path / "pme.json"
        save_model(path, SavedModel(series))
        loaded = load_model(path).model
        assert isinstance(loaded, PmeSeries)
        np.testing.assert_array_equal(loaded.spline_at(1.0).s, fits[1].s)
        np.testing.assert_array_equal(loaded.seeds_at(0.0), knots)
        with pytest.raises(ValueError, match="no per-time fit"):
            loaded.spline_at(0.5)

    def test_lift_metadata(self) -> None:
        spec = LiftSpec("polar", 0.5, (0.1, -0.2))
        payload = model_to_dict(SavedModel(_model(), spec, 2))
        restored = model_from_dict(json.loads(json.dumps(payload)))
        assert restored.lift == spec
        assert restored.original_dim == 2

    def test_bad_version(self) -> None:
        payload = model_to_dict(SavedModel(_model()))
        payload["format_version"] = 99
        with pytest.raises(FormatError, match="format_version"):
            model_from_dict(payload)

    def test_unknown_kind(self) -> None:
        with pytest.raises(FormatError, match="unknown model kind"):
            model_from_dict({"format_version": 1, "kind": "tree"})

    def test_missing_field(self) -> None:
        payload = model_to_dict(SavedModel(_model()))
        del payload["grid"]
        with pytest.raises(FormatError, match="'grid'"):
            model_from_dict(payload)

    def test_invalid_json_reports_line(self, tmp_path: Path) -> None:
        path = tmp_path / "broken.json"
        path.write_text('{\n "kind": \n', encoding="utf-8")
        with pytest.raises(FormatError, match="invalid JSON") as info:
            load_model(path)
        assert info.value.line is not None

    def test_not_an_object(self, tmp_path: Path) -> None:
        path = tmp_path / "list.json"
        path.write_text("[1, 2]\n", encoding="utf-8")
        with pytest.raises(FormatError, match="JSON object"):
            load_model(path)
