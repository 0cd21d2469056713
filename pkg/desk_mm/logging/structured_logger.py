"""
Desk Mobile Manipulation Toolkit - Structured Logger
JSON-lines形式の構造化ログ (制御コマンドログ・求解記録)
"""

import inspect
import json
import logging
import traceback
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)


class LogLevel(Enum):
    """ログレベル"""
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"

    def to_logging_level(self) -> int:
        """標準ライブラリのログレベルに変換"""
        return getattr(logging, self.name)


def _plain(value: Any) -> Any:
    """numpy値をJSON化可能な値へ"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class LogEntry:
    """構造化ログエントリー"""
    timestamp: str
    level: LogLevel
    message: str
    module: str
    function: str
    line_number: int
    component: str = "desk_mm"
    context: Dict[str, Any] = field(default_factory=dict)
    stack_trace: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        data = asdict(self)
        data["level"] = self.level.value
        data["context"] = _plain(self.context)
        return data

    def to_json(self) -> str:
        """JSON形式に変換"""
        return json.dumps(self.to_dict(), ensure_ascii=False)


class LogFilter:
    """ログフィルター"""

    def __init__(self):
        self.level_filters: List[LogLevel] = []
        self.component_filters: List[str] = []
        self.keyword_filters: List[str] = []
        self.custom_filters: List[Callable[[LogEntry], bool]] = []

    def add_level_filter(self, level: LogLevel) -> None:
        if level not in self.level_filters:
            self.level_filters.append(level)

    def add_component_filter(self, component: str) -> None:
        if component not in self.component_filters:
            self.component_filters.append(component)

    def add_keyword_filter(self, keyword: str) -> None:
        if keyword not in self.keyword_filters:
            self.keyword_filters.append(keyword)

    def add_custom_filter(self, filter_func: Callable[[LogEntry], bool]) -> None:
        self.custom_filters.append(filter_func)

    def should_log(self, entry: LogEntry) -> bool:
        """ログエントリーがフィルター条件を満たすかチェック"""
        if self.level_filters and entry.level not in self.level_filters:
            return False
        if self.component_filters and entry.component not in self.component_filters:
            return False
        if self.keyword_filters:
            message_lower = entry.message.lower()
            if not any(keyword.lower() in message_lower for keyword in self.keyword_filters):
                return False
        return all(custom(entry) for custom in self.custom_filters)


class StructuredLogger:
    """
    構造化ログシステム

    記録したエントリーはメモリにも保持し (keep_entries)、実行レポートや
    受け入れ検査がファイルを読み直さずに参照できる。
    """

    def __init__(self,
                 name: str = "desk_mm",
                 log_file: Optional[Union[str, Path]] = None,
                 console_output: bool = False,
                 keep_entries: bool = True):
        """
        初期化

        Args:
            name: ロガー名 (コンポーネント名)
            log_file: JSON-linesの出力先
            console_output: コンソール出力するかどうか
            keep_entries: エントリーをメモリに保持するかどうか
        """
        self.name = name
        self.log_file = Path(log_file) if log_file else None
        self.console_output = console_output
        self.keep_entries = keep_entries
        self.entries: List[LogEntry] = []
        self.filters: List[LogFilter] = []

        self.std_logger = logging.getLogger(f"desk_mm.structured.{name}")
        self.std_logger.setLevel(logging.DEBUG)
        self.std_logger.propagate = False
        self.std_logger.handlers.clear()
        self._setup_handlers()

        logger.info(f"StructuredLogger initialized: {name}")

    def _setup_handlers(self) -> None:
        formatter = logging.Formatter("%(message)s")
        if self.log_file:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(self.log_file, encoding="utf-8")
            file_handler.setFormatter(formatter)
            self.std_logger.addHandler(file_handler)
        if self.console_output:
            console_handler = logging.StreamHandler()
            console_handler.setFormatter(formatter)
            self.std_logger.addHandler(console_handler)

    def close(self) -> None:
        """ファイルハンドラーを閉じる"""
        for handler in list(self.std_logger.handlers):
            handler.close()
            self.std_logger.removeHandler(handler)

    def _create_log_entry(self, level: LogLevel, message: str,
                          context: Optional[Dict[str, Any]] = None,
                          stack_trace: Optional[str] = None) -> LogEntry:
        frame = inspect.currentframe()
        try:
            # この関数 → ログメソッド → 呼び出し元
            caller = frame.f_back.f_back if frame and frame.f_back else None
            module_name = caller.f_globals.get("__name__", "unknown") if caller else "unknown"
            function_name = caller.f_code.co_name if caller else "unknown"
            line_number = caller.f_lineno if caller else 0
        finally:
            del frame
        return LogEntry(datetime.now().isoformat(), level, message, module_name, function_name,
                        line_number, self.name, dict(context or {}), stack_trace)

    def _log_entry(self, entry: LogEntry) -> None:
        if not all(f.should_log(entry) for f in self.filters):
            return
        if self.keep_entries:
            self.entries.append(entry)
        self.std_logger.log(entry.level.to_logging_level(), entry.to_json())

    def add_filter(self, log_filter: LogFilter) -> None:
        self.filters.append(log_filter)

    def debug(self, message: str, **kwargs) -> None:
        self._log_entry(self._create_log_entry(LogLevel.DEBUG, message, **kwargs))

    def info(self, message: str, **kwargs) -> None:
        self._log_entry(self._create_log_entry(LogLevel.INFO, message, **kwargs))

    def warning(self, message: str, **kwargs) -> None:
        self._log_entry(self._create_log_entry(LogLevel.WARNING, message, **kwargs))

    def error(self, message: str, exception: Optional[Exception] = None, **kwargs) -> None:
        """エラーログを記録"""
        stack_trace = None
        if exception:
            stack_trace = "".join(traceback.format_exception(type(exception), exception,
                                                             exception.__traceback__))
        self._log_entry(self._create_log_entry(LogLevel.ERROR, message, stack_trace=stack_trace, **kwargs))

    def log_operation(self, operation: str, status: str, duration_ms: Optional[float] = None,
                      **context) -> None:
        """
        操作ログを記録 (求解・再計画)

        Args:
            operation: 操作名
            status: "success" / "error" / その他
            duration_ms: 所要時間
        """
        data: Dict[str, Any] = {"operation": operation, "status": status}
        if duration_ms is not None:
            data["duration_ms"] = duration_ms
        data.update(context)
        if status == "success":
            self.info(f"Operation completed: {operation}", context=data)
        elif status == "error":
            self.error(f"Operation failed: {operation}", context=data)
        else:
            self.info(f"Operation {status}: {operation}", context=data)

    def log_cycle(self, t: float, commands: Dict[str, Any], sigma_s: float,
                  tracking_errors: Dict[str, float], solve_ms: float, **extra) -> None:
        """制御周期ごとのコマンドログ"""
        data = {"t": t, "commands": commands, "sigma_s": sigma_s,
                "tracking_errors": tracking_errors, "solve_ms": solve_ms}
        data.update(extra)
        self.debug("control_cycle", context=data)

    def records(self, message: Optional[str] = None) -> List[Dict[str, Any]]:
        """保持中エントリーのcontext (message で絞り込み)"""
        return [e.context for e in self.entries if message is None or e.message == message]
