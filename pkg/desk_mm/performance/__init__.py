"""
Desk Mobile Manipulation Toolkit - Performance Module
計測とIRMキャッシュ
"""

from .cache_manager import CacheStats, IrmCache, irm_cache_key
from .profiler import PerformanceProfiler, ProfileConfig, ProfileResult, ProfileType

__all__ = [
    # Profiling
    "PerformanceProfiler",
    "ProfileResult",
    "ProfileConfig",
    "ProfileType",

    # Caching
    "IrmCache",
    "CacheStats",
    "irm_cache_key",
]
