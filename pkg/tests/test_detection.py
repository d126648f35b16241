"""Tests for GIL detection and the default worker budget."""

from __future__ import annotations

import logging
import sys
import sysconfig
from unittest.mock import patch

import pytest

from lpmkit._detection import THREADS_ENV, default_workers, is_gil_disabled, recommended_backend


class TestIsGilDisabled:
    """Tests for is_gil_disabled."""

    def setup_method(self) -> None:
        is_gil_disabled.cache_clear()

    def teardown_method(self) -> None:
        is_gil_disabled.cache_clear()

    def test_runtime_check(self) -> None:
        with patch.object(sys, "_is_gil_enabled", create=True, return_value=True):
            assert is_gil_disabled() is False
        is_gil_disabled.cache_clear()
        with patch.object(sys, "_is_gil_enabled", create=True, return_value=False):
            assert is_gil_disabled() is True

    @pytest.mark.skipif(sys.version_info >= (3, 13), reason="runtime check takes precedence")
    def test_build_flag(self) -> None:
        with patch.object(sysconfig, "get_config_var", return_value="1"):
            assert is_gil_disabled() is True
        is_gil_disabled.cache_clear()
        with patch.object(sysconfig, "get_config_var", return_value=None):
            assert is_gil_disabled() is False

    def test_cached(self) -> None:
        is_gil_disabled()
        is_gil_disabled()
        assert is_gil_disabled.cache_info().hits >= 1


class TestRecommendedBackend:
    """Tests for recommended_backend."""

    def setup_method(self) -> None:
        is_gil_disabled.cache_clear()

    def teardown_method(self) -> None:
        is_gil_disabled.cache_clear()

    def test_follows_gil(self) -> None:
        with patch.object(sys, "_is_gil_enabled", create=True, return_value=True):
            assert recommended_backend() == "process"
        is_gil_disabled.cache_clear()
        with patch.object(sys, "_is_gil_enabled", create=True, return_value=False):
            assert recommended_backend() == "thread"


class TestDefaultWorkers:
    """Tests for the LPMKIT_THREADS budget."""

    def test_environment_wins(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(THREADS_ENV, "3")
        assert default_workers() == 3

    def test_cpu_count_fallback(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv(THREADS_ENV, raising=False)
        with patch("lpmkit._detection.os.cpu_count", return_value=6):
            assert default_workers() == 6
        with patch("lpmkit._detection.os.cpu_count", return_value=128):
            assert default_workers() == 32
        with patch("lpmkit._detection.os.cpu_count", return_value=None):
            assert default_workers() == 4

    @pytest.mark.parametrize("raw", ["many", "0", "-2"])
    def test_bad_values_ignored(
        self, raw: str, monkeypatch: pytest.MonkeyPatch, caplog: pytest.LogCaptureFixture
    ) -> None:
        monkeypatch.setenv(THREADS_ENV, raw)
        with (
            patch("lpmkit._detection.os.cpu_count", return_value=2),
            caplog.at_level(logging.WARNING, logger="lpmkit._detection"),
        ):
            assert default_workers() == 2
        assert THREADS_ENV in caplog.text
