"""
Desk Mobile Manipulation Toolkit - Logging Module
構造化ログ (制御コマンドログ・求解記録)
"""

from .structured_logger import LogEntry, LogFilter, LogLevel, StructuredLogger

__all__ = [
    "StructuredLogger",
    "LogLevel",
    "LogEntry",
    "LogFilter",
]
