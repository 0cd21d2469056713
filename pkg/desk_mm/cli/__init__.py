"""
Desk Mobile Manipulation Toolkit - CLI Interface
コマンドラインインターフェース
"""

from .main import main
from .commands import (
    bench_command,
    check_command,
    export_plot_command,
    plan_command,
    simulate_command,
)

__all__ = [
    "main",
    "bench_command",
    "check_command",
    "export_plot_command",
    "plan_command",
    "simulate_command",
]
