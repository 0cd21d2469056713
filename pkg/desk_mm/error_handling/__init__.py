"""
Desk Mobile Manipulation Toolkit - Error Handling Module
回復済み失敗の記録と統計
"""

from .exception_handler import ErrorContext, ExceptionHandler, create_error_context

__all__ = [
    "ExceptionHandler",
    "ErrorContext",
    "create_error_context",
]
