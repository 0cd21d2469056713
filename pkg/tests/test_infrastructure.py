"""
Desk Mobile Manipulation Toolkit - Infrastructure Tests
設定・構造化ログ・例外処理・プロファイラーのテスト
"""

import json
import tempfile
import time
from pathlib import Path
from unittest.mock import Mock

import numpy as np
import pytest
import yaml

from desk_mm.core.settings import ToolkitSettings, dump_settings, load_settings
from desk_mm.error_handling.exception_handler import ExceptionHandler, create_error_context
from desk_mm.exceptions import (ConfigurationError, ControlError, DeskMMException, ErrorCategory, ErrorSeverity,
                                ParameterError, SearchFailure, WarpScheduleError)
from desk_mm.logging.structured_logger import LogFilter, LogLevel, StructuredLogger
from desk_mm.performance.profiler import PerformanceProfiler, ProfileConfig, ProfileType


class TestSettings:
    """設定の読み込みテスト"""

    def test_defaults(self):
        """ファイル指定なし・存在しないファイルは既定値"""
        assert load_settings() == ToolkitSettings()
        assert load_settings("/nonexistent/settings.yaml") == ToolkitSettings()
        settings = ToolkitSettings()
        assert settings.sim.control_rate == 50.0
        assert settings.optimizer.tp_min == 3.0

    def test_partial_override(self):
        """一部だけ上書きした設定ファイル"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "settings.yaml"
            path.write_text(yaml.safe_dump({"optimizer": {"enable_tap": False}, "sim": {"active_tasks": 3}}),
                            encoding="utf-8")
            settings = load_settings(path)
        assert not settings.optimizer.enable_tap
        assert settings.sim.active_tasks == 3
        assert settings.optimizer.enable_cmz

    def test_invalid_files(self):
        """不正なYAML・非マッピング・範囲外の値・未対応バージョン"""
        cases = ["a: [unclosed", "- 1\n- 2\n", yaml.safe_dump({"sim": {"control_rate": -1.0}}),
                 yaml.safe_dump({"version": "3.0"})]
        with tempfile.TemporaryDirectory() as temp_dir:
            for i, text in enumerate(cases):
                path = Path(temp_dir) / f"bad{i}.yaml"
                path.write_text(text, encoding="utf-8")
                with pytest.raises(ConfigurationError):
                    load_settings(path)

    def test_dump_roundtrip(self):
        """辞書化して再構築"""
        settings = ToolkitSettings()
        assert ToolkitSettings(**dump_settings(settings)) == settings


class TestExceptions:
    """例外クラスのテスト"""

    def test_message_and_dict(self):
        """詳細付きメッセージと辞書化"""
        error = ParameterError("Bad value", "dt=0")
        assert str(error) == "Bad value: dt=0"
        data = error.to_dict()
        assert data["type"] == "ParameterError"
        assert data["category"] == ErrorCategory.PARAMETER_ERROR.value

    def test_search_failure_fields(self):
        """探索失敗は進捗と展開数を持つ"""
        error = SearchFailure("No path", best_progress=2, expanded_nodes=30)
        assert error.to_dict()["expanded_nodes"] == 30
        assert isinstance(error, DeskMMException)

    def test_warp_schedule_error(self):
        """ワーピングのエラーは制御エラーの一種"""
        error = WarpScheduleError("overlap")
        assert isinstance(error, ControlError)
        assert error.severity == ErrorSeverity.HIGH
        assert error.recovery_suggestions


class TestStructuredLogger:
    """構造化ログのテスト"""

    def test_json_lines_file(self):
        """ファイルにJSON-linesで書き出す"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "logs" / "run.jsonl"
            log = StructuredLogger("runner", log_file=path)
            log.log_cycle(0.02, {"v": 0.1, "omega": 0.0}, 1.0, {"ee": 0.01}, 3.5)
            log.log_operation("replan", "success", duration_ms=120.0, tasks=["pick_a"])
            log.close()
            lines = path.read_text(encoding="utf-8").splitlines()
        entries = [json.loads(line) for line in lines]
        assert entries[0]["message"] == "control_cycle"
        assert entries[0]["context"]["sigma_s"] == 1.0
        assert entries[1]["context"]["operation"] == "replan"
        assert entries[1]["level"] == "info"

    def test_records_and_numpy_context(self):
        """保持エントリーの取得とnumpy値のJSON化"""
        log = StructuredLogger("test")
        log.info("solve", context={"x": np.array([1.0, 2.0]), "n": np.int64(3)})
        log.info("other")
        solve = log.records("solve")
        assert len(solve) == 1
        np.testing.assert_array_equal(solve[0]["x"], [1.0, 2.0])
        assert json.loads(log.entries[0].to_json())["context"] == {"x": [1.0, 2.0], "n": 3}
        assert len(log.records()) == 2

    def test_filters(self):
        """レベル・キーワードフィルター"""
        log = StructuredLogger("filtered")
        log_filter = LogFilter()
        log_filter.add_level_filter(LogLevel.ERROR)
        log.add_filter(log_filter)
        log.info("ignored")
        log.error("replan failed", exception=ValueError("boom"))
        assert [e.message for e in log.entries] == ["replan failed"]
        assert "ValueError" in log.entries[0].stack_trace

        keyword = LogFilter()
        keyword.add_keyword_filter("GRASP")
        other = StructuredLogger("keyword")
        other.add_filter(keyword)
        other.info("grasp closed")
        other.info("cycle")
        assert len(other.entries) == 1


class TestExceptionHandler:
    """例外ハンドラーのテスト"""

    def setup_method(self):
        self.handler = ExceptionHandler(max_history=3)

    def test_statistics(self):
        """種類・カテゴリ・操作ごとの集計"""
        self.handler.handle_exception(ParameterError("a"), create_error_context("runner", "replan", 1.0))
        self.handler.handle_exception(ValueError("b"), create_error_context("runner", "replan", 2.0))
        stats = self.handler.get_error_statistics()
        assert stats["total_errors"] == 2
        assert stats["by_type"] == {"ParameterError": 1, "ValueError": 1}
        assert stats["by_category"] == {"parameter_error": 1}
        assert stats["by_operation"] == {"replan": 2}

    def test_nearest_base_handler(self):
        """最も近い基底クラスのハンドラーとグローバルハンドラーを呼ぶ"""
        control = Mock()
        base = Mock()
        global_handler = Mock()
        self.handler.register_handler(ControlError, control)
        self.handler.register_handler(DeskMMException, base)
        self.handler.register_global_handler(global_handler)
        self.handler.handle_exception(WarpScheduleError("overlap"))
        assert control.call_count == 1
        assert base.call_count == 0
        assert global_handler.call_count == 1

    def test_failing_handler_is_contained(self):
        """ハンドラー内の例外は外に出さない"""
        self.handler.register_handler(ValueError, Mock(side_effect=RuntimeError("handler bug")))
        self.handler.handle_exception(ValueError("x"))
        assert self.handler.get_error_statistics()["total_errors"] == 1

    def test_history_limit(self):
        """履歴は max_history 件まで"""
        for i in range(5):
            self.handler.handle_exception(ParameterError(f"e{i}"))
        assert len(self.handler.error_history) == 3
        assert self.handler.error_history[-1]["message"] == "e4"
        self.handler.clear_error_history()
        assert self.handler.get_error_statistics()["total_errors"] == 0


class TestProfiler:
    """プロファイラーのテスト"""

    def test_profile_context(self):
        """所要時間とメタデータを記録"""
        profiler = PerformanceProfiler()
        with profiler.profile("solve", tasks=2) as result:
            time.sleep(0.01)
        assert result.duration_ms >= 5.0
        assert result.metadata == {"tasks": 2}
        assert profiler.summary()["solve"]["count"] == 1

    def test_decorator_and_cpu(self):
        """デコレーターとCPUプロファイル"""
        profiler = PerformanceProfiler(ProfileConfig(profile_types=[ProfileType.WALL, ProfileType.CPU],
                                                     max_results=2))

        @profiler.profile_function("square")
        def square(x):
            return x * x

        assert square(3) == 9
        assert profiler.results[-1].cpu_stats["total_calls"] >= 1
        for _ in range(3):
            square(2)
        assert len(profiler.results) == 2
        profiler.clear()
        assert profiler.summary() == {}
