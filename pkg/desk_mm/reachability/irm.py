"""
Desk Mobile Manipulation Toolkit - Inverse Reachability Map
関節空間の一括FK走査による逆到達可能性マップ
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from ..core.settings import IrmSettings
from ..geometry.se3 import RigidPose
from ..robot.description import RobotDescription
from ..robot.kinematics import arm_fk_batch, self_collision_clearance

logger = logging.getLogger(__name__)

IRM_FORMAT_VERSION = "1.0"

BinKey = Tuple[int, int]  # (接近方向ビン, 手先高さボクセル)


def approach_directions() -> np.ndarray:
    """26方向の接近方向ビン ({-1,0,1}³ \\ 0 の正規化)"""
    dirs = [d for d in itertools.product((-1, 0, 1), repeat=3) if any(d)]
    dirs = np.asarray(dirs, dtype=float)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


_DIRECTIONS = approach_directions()


def approach_bin(axes: np.ndarray) -> np.ndarray:
    """接近軸 (N×3) を最も近い方向ビンへ"""
    return np.argmax(np.atleast_2d(axes) @ _DIRECTIONS.T, axis=1)


@dataclass
class InverseReachabilityMap:
    """
    手先姿勢ビン → ベース相対の平面オフセット

    ベース原点・ヨー0で生成した手先の相対位置を (接近方向, 高さ) で索引し、
    クエリ時にヨーのビンごとに回転してベース位置を逆算する。
    """

    robot_digest: str
    base_resolution: float
    yaw_bins: int
    position_resolution: float
    table: Dict[BinKey, np.ndarray]
    sample_count: int = 0
    version: str = IRM_FORMAT_VERSION
    _yaws: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._yaws = 2.0 * np.pi * np.arange(self.yaw_bins) / self.yaw_bins

    @property
    def yaws(self) -> np.ndarray:
        return self._yaws

    @property
    def bin_count(self) -> int:
        return len(self.table)

    def cell_center(self, cells: np.ndarray) -> np.ndarray:
        """ベースセル番号 → セル中心 (m)"""
        return np.asarray(cells, dtype=float)[..., :2] * self.base_resolution

    def query_with_yaw(self, pose: RigidPose) -> np.ndarray:
        """
        R(P): 手先姿勢 P を実現できるベースセル

        Returns:
            (ix, iy, ヨービン) の N×3 整数配列
        """
        z_index = int(np.round(pose.translation[2] / self.position_resolution))
        approach = pose.z_axis
        rows: List[np.ndarray] = []
        for k, psi in enumerate(self._yaws):
            c, s = np.cos(psi), np.sin(psi)
            local = np.array([c * approach[0] + s * approach[1],
                              -s * approach[0] + c * approach[1], approach[2]])
            offsets = self.table.get((int(approach_bin(local)[0]), z_index))
            if offsets is None:
                continue
            rel = offsets * self.position_resolution
            world = pose.translation[:2] - np.stack([c * rel[:, 0] - s * rel[:, 1],
                                                     s * rel[:, 0] + c * rel[:, 1]], axis=1)
            cells = np.round(world / self.base_resolution).astype(int)
            rows.append(np.column_stack([cells, np.full(len(cells), k)]))
        if not rows:
            return np.zeros((0, 3), dtype=int)
        return np.unique(np.vstack(rows), axis=0)

    def query(self, pose: RigidPose) -> np.ndarray:
        """ヨーを周辺化した平面ベースセル (N×2 整数)"""
        cells = self.query_with_yaw(pose)
        if len(cells) == 0:
            return np.zeros((0, 2), dtype=int)
        return np.unique(cells[:, :2], axis=0)

    def query_positions(self, pose: RigidPose) -> np.ndarray:
        """ベースセル中心 (N×2, m)"""
        return self.cell_center(self.query(pose))


def _joint_grid(desc: RobotDescription, samples: int) -> List[np.ndarray]:
    return [np.linspace(lo, hi, samples) for lo, hi in zip(desc.q_min, desc.q_max)]


def _sweep_chunk(desc: RobotDescription, grid: List[np.ndarray], start: int, stop: int,
                 settings: IrmSettings) -> Dict[BinKey, Set[Tuple[int, int]]]:
    """チャンク1つ分の map 処理"""
    shape = tuple(len(g) for g in grid)
    index = np.array(np.unravel_index(np.arange(start, stop), shape)).T
    arms = np.stack([grid[j][index[:, j]] for j in range(len(grid))], axis=1)
    ee, centers = arm_fk_batch(desc, arms)
    free = np.atleast_1d(self_collision_clearance(desc, centers)) > 0.0
    ee = ee[free]
    partial: Dict[BinKey, Set[Tuple[int, int]]] = {}
    if len(ee) == 0:
        return partial
    bins = approach_bin(ee[:, :3, 2])
    z_idx = np.round(ee[:, 2, 3] / settings.position_resolution).astype(int)
    xy = np.round(ee[:, :2, 3] / settings.position_resolution).astype(int)
    for b, z, (x, y) in zip(bins, z_idx, xy):
        partial.setdefault((int(b), int(z)), set()).add((int(x), int(y)))
    return partial


def build_irm(desc: RobotDescription, settings: Optional[IrmSettings] = None,
              workers: int = 1) -> InverseReachabilityMap:
    """
    逆到達可能性マップの構築

    関節グリッドをチャンクに分けてFKし (map)、ビンごとの集合を併合する (reduce)。

    Args:
        desc: ロボット記述
        settings: 解像度設定
        workers: チャンク処理の並列数

    Returns:
        InverseReachabilityMap
    """
    settings = settings or IrmSettings()
    grid = _joint_grid(desc, settings.joint_samples)
    total = int(np.prod([len(g) for g in grid]))
    bounds = [(s, min(s + settings.chunk_size, total)) for s in range(0, total, settings.chunk_size)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda b: _sweep_chunk(desc, grid, b[0], b[1], settings), bounds))
    else:
        partials = [_sweep_chunk(desc, grid, start, stop, settings) for start, stop in bounds]

    merged: Dict[BinKey, Set[Tuple[int, int]]] = {}
    for partial in partials:
        for key, offsets in partial.items():
            merged.setdefault(key, set()).update(offsets)
    table = {key: np.array(sorted(offsets), dtype=int) for key, offsets in merged.items()}

    irm = InverseReachabilityMap(desc.digest, settings.base_resolution, settings.yaw_bins,
                                 settings.position_resolution, table, total)
    logger.info(f"IRM built: {total} configurations, {irm.bin_count} pose bins")
    return irm
