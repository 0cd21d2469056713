"""
Desk Mobile Manipulation Toolkit - Performance Profiler
求解・再計画・制御周期の計測
"""

import cProfile
import functools
import io
import logging
import pstats
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional

import psutil

logger = logging.getLogger(__name__)


class ProfileType(Enum):
    """プロファイルタイプ"""
    WALL = "wall"
    MEMORY = "memory"
    CPU = "cpu"


@dataclass
class ProfileConfig:
    """プロファイル設定"""
    profile_types: List[ProfileType] = field(default_factory=lambda: [ProfileType.WALL, ProfileType.MEMORY])
    sort_by: str = "cumulative"
    top_functions: int = 20
    max_results: int = 1000


@dataclass
class ProfileResult:
    """プロファイル結果"""
    name: str
    start_time: str
    duration_ms: float = 0.0
    rss_delta_mb: float = 0.0
    cpu_stats: Optional[Dict[str, Any]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return asdict(self)


class PerformanceProfiler:
    """パフォーマンスプロファイラー"""

    def __init__(self, config: Optional[ProfileConfig] = None):
        """
        初期化

        Args:
            config: プロファイル設定
        """
        self.config = config or ProfileConfig()
        self.results: List[ProfileResult] = []
        self.process = psutil.Process()
        logger.info("PerformanceProfiler initialized")

    @contextmanager
    def profile(self, name: str, profile_types: Optional[List[ProfileType]] = None,
                **metadata) -> Iterator[ProfileResult]:
        """
        計測コンテキストマネージャー

        終了時に yield した ProfileResult へ所要時間とRSS差分を書き込む。
        """
        types = profile_types or self.config.profile_types
        result = ProfileResult(name=name, start_time=datetime.now().isoformat(), metadata=dict(metadata))
        rss_start = self.process.memory_info().rss if ProfileType.MEMORY in types else 0
        cpu_profiler = None
        if ProfileType.CPU in types:
            cpu_profiler = cProfile.Profile()
            cpu_profiler.enable()
        start = time.perf_counter()
        try:
            yield result
        finally:
            result.duration_ms = (time.perf_counter() - start) * 1000.0
            if cpu_profiler is not None:
                cpu_profiler.disable()
                stream = io.StringIO()
                stats = pstats.Stats(cpu_profiler, stream=stream)
                stats.sort_stats(self.config.sort_by)
                stats.print_stats(self.config.top_functions)
                result.cpu_stats = {"total_calls": stats.total_calls, "total_time": stats.total_tt,
                                    "stats_output": stream.getvalue()}
            if ProfileType.MEMORY in types:
                result.rss_delta_mb = (self.process.memory_info().rss - rss_start) / (1024 * 1024)
            self._store(result)

    def profile_function(self, name: Optional[str] = None):
        """関数プロファイリングデコレーター"""
        def decorator(func):
            func_name = name or f"{func.__module__}.{func.__name__}"

            @functools.wraps(func)
            def wrapper(*args, **kwargs):
                with self.profile(func_name):
                    return func(*args, **kwargs)
            return wrapper
        return decorator

    def _store(self, result: ProfileResult) -> None:
        self.results.append(result)
        if len(self.results) > self.config.max_results:
            self.results = self.results[-self.config.max_results:]
        logger.debug(f"Profiled {result.name}: {result.duration_ms:.2f} ms")

    def summary(self) -> Dict[str, Dict[str, float]]:
        """名前ごとの回数・平均・最大 (ms)"""
        grouped: Dict[str, List[float]] = {}
        for r in self.results:
            grouped.setdefault(r.name, []).append(r.duration_ms)
        return {name: {"count": len(v), "mean_ms": sum(v) / len(v), "max_ms": max(v)}
                for name, v in grouped.items()}

    def clear(self) -> None:
        self.results.clear()
