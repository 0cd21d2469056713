"""
Desk Mobile Manipulation Toolkit - IRM Cache
構築済み逆到達可能性マップの永続キャッシュ
"""

import hashlib
import json
import logging
import pickle
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

from ..core.settings import IrmSettings
from ..reachability.irm import IRM_FORMAT_VERSION, InverseReachabilityMap
from ..robot.description import RobotDescription

logger = logging.getLogger(__name__)


@dataclass
class CacheStats:
    """キャッシュ統計"""
    cache_hits: int = 0
    cache_misses: int = 0
    invalid_entries: int = 0
    writes: int = 0

    @property
    def hit_rate(self) -> float:
        """ヒット率 (%)"""
        total_requests = self.cache_hits + self.cache_misses
        if total_requests == 0:
            return 0.0
        return (self.cache_hits / total_requests) * 100

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        result = asdict(self)
        result["hit_rate"] = self.hit_rate
        return result


def irm_cache_key(desc: RobotDescription, settings: IrmSettings) -> str:
    """sha256(ロボット記述 + 解像度 + フォーマットバージョン)"""
    payload = {
        "robot": desc.digest,
        "base_resolution": settings.base_resolution,
        "yaw_bins": settings.yaw_bins,
        "position_resolution": settings.position_resolution,
        "joint_samples": settings.joint_samples,
        "version": IRM_FORMAT_VERSION,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


class IrmCache:
    """
    IRMのディスクキャッシュ

    バージョン不一致・破損ファイルはミス扱い (例外にしない)。
    """

    def __init__(self, cache_dir: Union[str, Path]):
        """
        初期化

        Args:
            cache_dir: キャッシュディレクトリ
        """
        self.cache_dir = Path(cache_dir)
        self.stats = CacheStats()
        self._memory: Dict[str, InverseReachabilityMap] = {}
        self._lock = threading.RLock()
        logger.info(f"IrmCache initialized: {self.cache_dir}")

    def path_for(self, key: str) -> Path:
        return self.cache_dir / f"irm_{key[:32]}.pkl"

    def get(self, desc: RobotDescription, settings: IrmSettings) -> Optional[InverseReachabilityMap]:
        """キャッシュからIRMを取得"""
        key = irm_cache_key(desc, settings)
        with self._lock:
            if key in self._memory:
                self.stats.cache_hits += 1
                return self._memory[key]
            path = self.path_for(key)
            if not path.exists():
                self.stats.cache_misses += 1
                logger.debug(f"IRM cache miss: {key[:12]}")
                return None
            try:
                with open(path, "rb") as f:
                    stored = pickle.load(f)
            except Exception as e:
                self.stats.cache_misses += 1
                self.stats.invalid_entries += 1
                logger.warning(f"Corrupt IRM cache file ignored: {path} ({e})")
                return None
            if (not isinstance(stored, dict) or stored.get("key") != key
                    or not isinstance(stored.get("irm"), InverseReachabilityMap)
                    or stored["irm"].version != IRM_FORMAT_VERSION):
                self.stats.cache_misses += 1
                self.stats.invalid_entries += 1
                logger.warning(f"Stale IRM cache file ignored: {path}")
                return None
            irm = stored["irm"]
            self._memory[key] = irm
            self.stats.cache_hits += 1
            logger.info(f"IRM loaded from cache: {path}")
            return irm

    def set(self, desc: RobotDescription, settings: IrmSettings, irm: InverseReachabilityMap) -> Path:
        """IRMを保存"""
        key = irm_cache_key(desc, settings)
        path = self.path_for(key)
        with self._lock:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with open(tmp, "wb") as f:
                pickle.dump({"key": key, "irm": irm}, f, protocol=pickle.HIGHEST_PROTOCOL)
            tmp.replace(path)
            self._memory[key] = irm
            self.stats.writes += 1
        logger.debug(f"IRM cached: {path}")
        return path

    def get_or_build(self, desc: RobotDescription, settings: IrmSettings,
                     builder: Callable[[], InverseReachabilityMap]) -> InverseReachabilityMap:
        irm = self.get(desc, settings)
        if irm is None:
            irm = builder()
            self.set(desc, settings, irm)
        return irm

    def clear(self) -> None:
        """メモリ上のエントリとキャッシュファイルを削除"""
        with self._lock:
            self._memory.clear()
            if self.cache_dir.exists():
                for path in self.cache_dir.glob("irm_*.pkl"):
                    path.unlink()
