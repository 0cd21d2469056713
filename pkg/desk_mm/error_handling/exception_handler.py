"""
Desk Mobile Manipulation Toolkit - Exception Handler
閉ループ実行中に回復した失敗の記録と統計
"""

import logging
import traceback
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Type

from ..exceptions import DeskMMException, ErrorSeverity

logger = logging.getLogger(__name__)


@dataclass
class ErrorContext:
    """
    エラーコンテキスト

    sim_time は仮想時刻。実時間のタイムスタンプは持たない (トレースの決定性のため)。
    """
    component: str = "desk_mm"
    operation: Optional[str] = None
    sim_time: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return asdict(self)


def create_error_context(component: str = "desk_mm", operation: Optional[str] = None,
                         sim_time: Optional[float] = None, **metadata) -> ErrorContext:
    """エラーコンテキストを作成"""
    return ErrorContext(component, operation, sim_time, dict(metadata))


class ExceptionHandler:
    """例外ハンドラー"""

    def __init__(self, max_history: int = 1000):
        self.handlers: Dict[Type[Exception], Callable[[Exception, ErrorContext], None]] = {}
        self.global_handlers: List[Callable[[Exception, ErrorContext], None]] = []
        self.error_history: List[Dict[str, Any]] = []
        self.max_history = max_history
        logger.info("ExceptionHandler initialized")

    def register_handler(self, exception_type: Type[Exception],
                         handler: Callable[[Exception, ErrorContext], None]) -> None:
        """特定の例外タイプのハンドラーを登録"""
        self.handlers[exception_type] = handler
        logger.info(f"Exception handler registered for: {exception_type.__name__}")

    def register_global_handler(self, handler: Callable[[Exception, ErrorContext], None]) -> None:
        """グローバルハンドラーを登録"""
        self.global_handlers.append(handler)

    def handle_exception(self, exception: Exception, context: Optional[ErrorContext] = None) -> None:
        """
        例外を処理 (記録・ハンドラー呼び出し・ログ)

        呼び出し側は回復済みであることが前提。ここでは再送出しない。
        """
        context = context or ErrorContext()
        error_info: Dict[str, Any] = {
            "exception_type": type(exception).__name__,
            "message": str(exception),
            "context": context.to_dict(),
        }
        if isinstance(exception, DeskMMException):
            error_info.update({
                "category": exception.category.value,
                "severity": exception.severity.value,
                "recovery_suggestions": exception.recovery_suggestions,
            })
        self.error_history.append(error_info)
        if len(self.error_history) > self.max_history:
            self.error_history = self.error_history[-self.max_history:]

        # 登録済みの最も近い基底クラスのハンドラー
        for klass in type(exception).__mro__:
            handler = self.handlers.get(klass)
            if handler is not None:
                try:
                    handler(exception, context)
                except Exception as handler_error:
                    logger.error(f"Error in exception handler: {handler_error}")
                break
        for handler in self.global_handlers:
            try:
                handler(exception, context)
            except Exception as handler_error:
                logger.error(f"Error in global exception handler: {handler_error}")

        self._log_exception(exception, context)

    def _log_exception(self, exception: Exception, context: ErrorContext) -> None:
        where = context.operation or context.component
        if isinstance(exception, DeskMMException):
            logger.log(self._severity_to_log_level(exception.severity),
                       f"{type(exception).__name__} [{exception.category.value}] in {where}: {exception}")
        else:
            logger.error(f"Unhandled exception in {where}: {type(exception).__name__}: {exception}")
            logger.debug("".join(traceback.format_exception(type(exception), exception,
                                                            exception.__traceback__)))

    def _severity_to_log_level(self, severity: ErrorSeverity) -> int:
        """重要度をログレベルに変換"""
        mapping = {
            ErrorSeverity.LOW: logging.INFO,
            ErrorSeverity.MEDIUM: logging.WARNING,
            ErrorSeverity.HIGH: logging.ERROR,
            ErrorSeverity.CRITICAL: logging.CRITICAL,
        }
        return mapping.get(severity, logging.ERROR)

    def get_error_statistics(self) -> Dict[str, Any]:
        """エラー統計を取得"""
        by_type: Dict[str, int] = {}
        by_category: Dict[str, int] = {}
        by_operation: Dict[str, int] = {}
        for error in self.error_history:
            by_type[error["exception_type"]] = by_type.get(error["exception_type"], 0) + 1
            if "category" in error:
                by_category[error["category"]] = by_category.get(error["category"], 0) + 1
            operation = error["context"].get("operation")
            if operation:
                by_operation[operation] = by_operation.get(operation, 0) + 1
        return {
            "total_errors": len(self.error_history),
            "by_type": by_type,
            "by_category": by_category,
            "by_operation": by_operation,
            "recent_errors": self.error_history[-10:],
        }

    def clear_error_history(self) -> None:
        """エラー履歴をクリア"""
        self.error_history.clear()
        logger.info("Error history cleared")
