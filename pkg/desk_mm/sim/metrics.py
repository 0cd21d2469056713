"""
Desk Mobile Manipulation Toolkit - Mission Metrics
ミッション成否・サイクルタイム・MSCT/SSCT
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ..core.settings import SimSettings
from ..frontend.tasks import TaskSpec
from ..geometry.se3 import RigidPose
from ..world.esdf import EsdfGrid

logger = logging.getLogger(__name__)

CLEARANCE_HEIGHTS = (0.05, 0.2, 0.35, 0.5)


@dataclass
class MissionResult:
    """ミッション結果"""

    index: int
    tasks: List[str]
    success: bool
    cycle_time: Optional[float]
    ideal_time: float
    msct: float
    failure: Optional[str] = None
    position_error: Optional[float] = None
    tilt: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return asdict(self)


def msct(success: bool, ideal_time: float, cycle_time: Optional[float]) -> float:
    """s · T / max(C, T)"""
    if not success or cycle_time is None:
        return 0.0
    denom = max(cycle_time, ideal_time)
    return 1.0 if denom <= 0.0 else ideal_time / denom


def ssct(results: Sequence[MissionResult]) -> float:
    """MSCT の平均"""
    if not results:
        return 0.0
    return float(np.mean([r.msct for r in results]))


def operation_time(results: Sequence[MissionResult]) -> float:
    """完了したミッションのサイクルタイムの和"""
    return float(sum(r.cycle_time for r in results if r.cycle_time is not None))


def tilt_angle(pose: RigidPose) -> float:
    """物体 z 軸と鉛直のなす角 (ロール・ピッチ)"""
    return float(math.acos(np.clip(pose.z_axis[2], -1.0, 1.0)))


def placement_check(task: TaskSpec, final_pose: RigidPose,
                    settings: SimSettings) -> Tuple[bool, float, float, Optional[str]]:
    """
    置き・落とし判定

    place: 判定領域内 (領域が無ければ目標から success_distance 未満) かつ傾き < success_tilt。
    drop: 目標との水平距離 < success_distance。

    Returns:
        (成功, 位置誤差, 傾き, 失敗タグ)
    """
    target = task.object_pose_at(task.duration)
    tilt = tilt_angle(final_pose)
    if task.kind == "drop":
        center = np.asarray(task.place_region.center) if task.place_region is not None else target.translation
        error = float(np.linalg.norm(final_pose.translation[:2] - center[:2]))
        ok = error < settings.success_distance
        return ok, error, tilt, None if ok else "drop_missed"
    error = float(np.linalg.norm(final_pose.translation - target.translation))
    if task.place_region is not None:
        inside = task.place_region.contains(final_pose.translation)
    else:
        inside = error < settings.success_distance
    if not inside:
        return False, error, tilt, "place_missed"
    if tilt >= settings.success_tilt:
        return False, error, tilt, "tilted"
    return True, error, tilt, None


def judge_mission(index: int, tasks: Sequence[TaskSpec], start_time: Optional[float],
                  release_time: Optional[float], grasped: bool, final_pose: Optional[RigidPose],
                  ideal_time: float, settings: SimSettings) -> MissionResult:
    """
    ミッションの判定

    Args:
        index: ミッション番号
        tasks: ミッションのタスク (最後が place/drop/operate)
        start_time: 前ミッションのグリッパ開放時刻 (最初のミッションは開始トリガ時刻)
        release_time: このミッションのグリッパ開放時刻 (無ければ None)
        grasped: 把持に成功したか
        final_pose: 開放後の物体の真の姿勢
        ideal_time: 理想時間 T (s)
        settings: 判定閾値
    """
    names = [t.name for t in tasks]
    cycle = None if release_time is None or start_time is None else release_time - start_time
    failure: Optional[str] = None
    error = tilt = None
    if release_time is None:
        failure = "no_release"
    elif not grasped:
        failure = "grasp_failed"
    elif final_pose is None:
        failure = "no_object"
    else:
        ok, error, tilt, failure = placement_check(tasks[-1], final_pose, settings)
        if tasks[-1].kind == "operate" and ok:
            failure = None
    success = failure is None
    result = MissionResult(index, names, success, cycle, ideal_time, msct(success, ideal_time, cycle),
                           failure, error, tilt)
    logger.info(f"Mission {index} {'succeeded' if success else 'failed'}"
                f"{'' if success else f' ({failure})'}: C={cycle}, T={ideal_time:.2f}")
    return result


class IdealTimeEstimator:
    """
    理想時間の推定

    ESDF を 2D のクリアランス格子 (8近傍) にし、ベースが通れるセル間の最短路を
    最大速度で割る。各区間はアームの到達半径に入った時点で打ち切る。
    """

    def __init__(self, world: Optional[EsdfGrid], footprint_radius: float, reach: float,
                 settings: Optional[SimSettings] = None):
        self.settings = settings or SimSettings()
        self.reach = reach
        self.world = world
        res = self.settings.ideal_grid_resolution
        if world is None:
            self.low = np.array([-10.0, -10.0])
            high = np.array([10.0, 10.0])
        else:
            self.low = world.origin[:2].copy()
            high = world.upper[:2]
        self.shape = tuple(int(n) for n in np.maximum(np.ceil((high - self.low) / res).astype(int) + 1, 1))
        xs = self.low[0] + res * np.arange(self.shape[0])
        ys = self.low[1] + res * np.arange(self.shape[1])
        self.centers = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        flat = self.centers.reshape(-1, 2)
        if world is None:
            self.free = np.ones(self.shape, dtype=bool)
        else:
            clearance = np.full(len(flat), np.inf)
            for z in CLEARANCE_HEIGHTS:
                pts = np.column_stack([flat, np.full(len(flat), z)])
                dist, _, _ = world.query_batch(pts)
                clearance = np.minimum(clearance, dist)
            self.free = (clearance > footprint_radius).reshape(self.shape)
        self._graph = self._build_graph()
        logger.info(f"IdealTimeEstimator initialized: {self.shape[0]}x{self.shape[1]} grid")

    def _build_graph(self):
        res = self.settings.ideal_grid_resolution
        nx, ny = self.shape
        index = np.arange(nx * ny).reshape(nx, ny)
        rows, cols, weights = [], [], []
        for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
            a = self.free[max(0, -dx):nx - max(0, dx), max(0, -dy):ny - max(0, dy)]
            b = self.free[max(0, dx):nx - max(0, -dx) or None, max(0, dy):ny - max(0, -dy) or None]
            both = a & b
            ia = index[max(0, -dx):nx - max(0, dx), max(0, -dy):ny - max(0, dy)][both]
            ib = index[max(0, dx):nx - max(0, -dx) or None, max(0, dy):ny - max(0, -dy) or None][both]
            w = res * math.hypot(dx, dy)
            rows.extend([ia, ib])
            cols.extend([ib, ia])
            weights.extend([np.full(len(ia), w), np.full(len(ia), w)])
        size = nx * ny
        return coo_matrix((np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(size, size)).tocsr()

    def _cell(self, xy: np.ndarray) -> int:
        res = self.settings.ideal_grid_resolution
        idx = np.clip(np.round((np.asarray(xy) - self.low) / res).astype(int), 0, np.asarray(self.shape) - 1)
        if not self.free[idx[0], idx[1]]:
            # 最寄りの自由セル
            free_idx = np.argwhere(self.free)
            if len(free_idx) == 0:
                return int(idx[0] * self.shape[1] + idx[1])
            idx = free_idx[np.argmin(np.linalg.norm(free_idx - idx, axis=1))]
        return int(idx[0] * self.shape[1] + idx[1])

    def leg(self, start_xy: np.ndarray, target_xy: np.ndarray) -> Tuple[float, np.ndarray]:
        """
        start から target が到達半径に入る最寄りの自由セルまで

        Returns:
            (経路長 m, 到着位置)
        """
        if float(np.linalg.norm(np.asarray(start_xy) - np.asarray(target_xy))) <= self.reach:
            return 0.0, np.asarray(start_xy, dtype=float)
        source = self._cell(start_xy)
        dist = dijkstra(self._graph, indices=source)
        flat = self.centers.reshape(-1, 2)
        within = np.linalg.norm(flat - np.asarray(target_xy), axis=1) <= self.reach
        candidates = np.where(within & np.isfinite(dist))[0]
        if len(candidates) == 0:
            logger.warning(f"No reachable cell near {np.round(target_xy, 3).tolist()}; using straight line")
            length = max(0.0, float(np.linalg.norm(np.asarray(target_xy) - start_xy)) - self.reach)
            return length, np.asarray(target_xy, dtype=float)
        best = candidates[np.argmin(dist[candidates])]
        return float(dist[best]), flat[best].copy()

    def mission_time(self, start_xy: np.ndarray, targets: Sequence[np.ndarray]) -> Tuple[float, np.ndarray]:
        """
        目標列を順に回る理想時間

        Returns:
            (T s, 最終位置)
        """
        position = np.asarray(start_xy, dtype=float)
        total = 0.0
        for target in targets:
            length, position = self.leg(position, np.asarray(target)[:2])
            total += length
        return total / self.settings.max_base_speed, position
