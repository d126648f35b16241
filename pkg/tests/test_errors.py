"""Tests for error types and Result wrappers."""

from __future__ import annotations

import pytest

from lpmkit._errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    LpmkitError,
    SolverError,
    StageError,
    WatertightError,
)
from lpmkit._types import Err, Ok


class TestOk:
    """Tests for the Ok wrapper."""

    def test_accessors(self) -> None:
        ok = Ok(0.25)
        assert ok.value == 0.25
        assert ok.is_ok()
        assert not ok.is_err()
        assert ok.unwrap() == 0.25
        assert repr(ok) == "Ok(0.25)"

    def test_equality_and_hash(self) -> None:
        assert Ok(1) == Ok(1)
        assert Ok(1) != Ok(2)
        assert Ok(1) != "Ok(1)"
        assert len({Ok(1), Ok(1), Ok(2)}) == 2

    def test_match(self) -> None:
        match Ok(3):
            case Ok(value):
                assert value == 3
            case _:
                pytest.fail("Ok did not match")


class TestErr:
    """Tests for the Err wrapper."""

    def test_accessors(self) -> None:
        exc = SolverError("singular")
        err = Err(exc)
        assert err.exception is exc
        assert err.is_err()
        assert not err.is_ok()
        assert "SolverError" in repr(err)

    def test_unwrap_raises(self) -> None:
        with pytest.raises(SolverError, match="singular"):
            Err(SolverError("singular")).unwrap()

    def test_equality_by_type_and_message(self) -> None:
        assert Err(ValueError("a")) == Err(ValueError("a"))
        assert Err(ValueError("a")) != Err(ValueError("b"))
        assert Err(ValueError("a")) != Err(TypeError("a"))
        assert len({Err(ValueError("a")), Err(ValueError("a"))}) == 1


class TestStageError:
    """Tests for StageError."""

    def test_fields(self) -> None:
        original = DegenerateInputError("zero-variance cloud")
        err = StageError("zero-variance cloud", original, stage="reduce", index=2)
        assert err.original is original
        assert err.stage == "reduce"
        assert err.index == 2
        assert str(err) == "[reduce] zero-variance cloud"

    def test_repr(self) -> None:
        err = StageError("x", SolverError("y"), stage="tune", index=4)
        text = repr(err)
        assert text.startswith("StageError('tune'")
        assert "index=4" in text
        assert "index" not in repr(StageError("x", SolverError("y"), stage="tune"))


class TestFormatError:
    """Tests for FormatError."""

    def test_line_prefix(self) -> None:
        err = FormatError("not a number", line=12)
        assert err.line == 12
        assert str(err) == "line 12: not a number"

    def test_without_line(self) -> None:
        err = FormatError("missing header")
        assert err.line is None
        assert str(err) == "missing header"


class TestHierarchy:
    """Every library error derives from LpmkitError."""

    @pytest.mark.parametrize(
        "cls",
        [DegenerateInputError, SolverError, WatertightError, ConfigError, FormatError, StageError],
    )
    def test_subclass(self, cls: type) -> None:
        assert issubclass(cls, LpmkitError)

    def test_watertight_default_message(self) -> None:
        assert str(WatertightError()) == "surface not watertight"
        assert str(WatertightError("hole at the pole")) == "hole at the pole"
