"""
Desk Mobile Manipulation Toolkit - Scene Rasterization
基本形状/点群から占有格子とESDFを生成
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ScenarioError
from .esdf import EsdfGrid, build_esdf

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxPrimitive:
    """直方体 (中心, 寸法, ヨー角)"""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float = 0.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        d = points - np.asarray(self.center)
        local = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]], axis=1)
        return np.all(np.abs(local) <= 0.5 * np.asarray(self.size) + 1e-9, axis=1)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        half = 0.5 * np.linalg.norm(self.size[:2])
        c = np.asarray(self.center)
        ext = np.array([half, half, 0.5 * self.size[2]])
        return c - ext, c + ext


@dataclass(frozen=True)
class CylinderPrimitive:
    """鉛直円柱 (中心, 半径, 高さ)"""

    center: Tuple[float, float, float]
    radius: float
    height: float

    def contains(self, points: np.ndarray) -> np.ndarray:
        d = points - np.asarray(self.center)
        return (np.hypot(d[:, 0], d[:, 1]) <= self.radius + 1e-9) & (np.abs(d[:, 2]) <= 0.5 * self.height + 1e-9)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        ext = np.array([self.radius, self.radius, 0.5 * self.height])
        return c - ext, c + ext


Primitive = Union[BoxPrimitive, CylinderPrimitive]


def load_point_cloud(path: Union[str, Path]) -> np.ndarray:
    """空白区切り x y z の点群ファイル"""
    try:
        points = np.loadtxt(path, dtype=float, ndmin=2)
    except (OSError, ValueError) as e:
        raise ScenarioError("Failed to read point cloud", str(e))
    if points.shape[1] < 3:
        raise ScenarioError("Point cloud rows need x y z", str(path))
    return points[:, :3]


def scene_bounds(primitives: Sequence[Primitive], points: Optional[np.ndarray],
                 extra_points: Optional[np.ndarray], padding: float) -> Tuple[np.ndarray, np.ndarray]:
    """全要素を含む軸平行境界 (床 z=0 から)"""
    lows: List[np.ndarray] = []
    highs: List[np.ndarray] = []
    for prim in primitives:
        lo, hi = prim.bounds()
        lows.append(lo)
        highs.append(hi)
    for cloud in (points, extra_points):
        if cloud is not None and len(cloud):
            lows.append(cloud.min(axis=0))
            highs.append(cloud.max(axis=0))
    if not lows:
        return np.array([-padding, -padding, 0.0]), np.array([padding, padding, 1.5])
    low = np.min(lows, axis=0) - padding
    high = np.max(highs, axis=0) + padding
    low[2] = 0.0
    high[2] = max(high[2], 1.5)
    return low, high


def rasterize(primitives: Sequence[Primitive], low: np.ndarray, high: np.ndarray, resolution: float,
              points: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    ボクセル中心の内外判定による占有格子

    Returns:
        (占有 3D配列, ボクセル(0,0,0)の中心)
    """
    dims = np.maximum(np.ceil((high - low) / resolution).astype(int) + 1, 1)
    axes = [low[k] + resolution * np.arange(dims[k]) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    occ = np.zeros(len(grid), dtype=bool)
    for prim in primitives:
        occ |= prim.contains(grid)
    occupancy = occ.reshape(tuple(dims))
    if points is not None and len(points):
        idx = np.round((points - low) / resolution).astype(int)
        valid = np.all((idx >= 0) & (idx < dims), axis=1)
        idx = idx[valid]
        occupancy[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return occupancy, low.copy()


def build_world(primitives: Sequence[Primitive], resolution: float = 0.05, cap: float = 5.0,
                padding: float = 0.5, points: Optional[np.ndarray] = None,
                include_points: Optional[np.ndarray] = None) -> EsdfGrid:
    """
    シーン記述からESDFを構築

    Args:
        primitives: 基本形状
        resolution: ボクセル解像度 (m)
        cap: 距離上限 (m)
        padding: 外周余白 (m)
        points: 障害物点群 (N×3)
        include_points: 格子に必ず含める点 (ロボット初期位置など)
    """
    low, high = scene_bounds(primitives, points, include_points, padding)
    occupancy, origin = rasterize(primitives, low, high, resolution, points)
    logger.info(f"Scene rasterized: {len(primitives)} primitives, {int(occupancy.sum())} occupied voxels")
    return build_esdf(occupancy, resolution, origin, cap)
