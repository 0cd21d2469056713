"""
Desk Mobile Manipulation Toolkit - Pose Oracle
可視性に応じて遅延・ノイズ付きの物体姿勢推定を返す (知覚モジュールの代替)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from ..core.settings import OptimizerSettings, OracleSettings
from ..geometry.se3 import RigidPose
from ..world.esdf import EsdfGrid

logger = logging.getLogger(__name__)


def target_visible(camera: RigidPose, target: np.ndarray, settings: OptimizerSettings,
                   world: Optional[EsdfGrid] = None) -> bool:
    """
    可視性判定

    視野錐 (光軸 z と目標方向の角度 ≤ θ_fov)、最大距離、
    カメラ-目標間の K_v−1 個の遮蔽球 (半径 (k/K_v) r_tgt) が障害物と交差しないこと。
    """
    p_c = camera.translation
    v = np.asarray(target, dtype=float) - p_c
    n = float(np.linalg.norm(v))
    if n > settings.max_range:
        return False
    if n > 1e-12 and float(camera.z_axis @ v) / n < float(np.cos(settings.fov_half_angle)):
        return False
    if world is None:
        return True
    K = settings.occlusion_spheres
    points = np.array([p_c + (k / K) * v for k in range(1, K)])
    dist, _, _ = world.query_batch(points)
    radii = np.arange(1, K) / K * settings.target_radius
    return bool(np.all(dist >= radii))


@dataclass
class VisibilityRecord:
    """タスクごとの可視時間の記録"""

    visible_time: float = 0.0
    first_visible: Optional[float] = None
    first_estimate: Optional[float] = None
    last_update: Optional[float] = None
    visible_before_manipulation: Optional[float] = None
    estimates: int = 0

    def to_dict(self) -> Dict[str, Optional[float]]:
        return {"visible_time": self.visible_time, "first_visible": self.first_visible,
                "first_estimate": self.first_estimate, "estimates": self.estimates,
                "visible_before_manipulation": self.visible_before_manipulation}


@dataclass
class PoseOracle:
    """
    姿勢オラクル

    累積可視時間が init_delay に達するまでは推定を返さない。
    以降は可視の間だけ rate [Hz] で更新し、真値に σ_pos, σ_rot のノイズを乗せる。
    """

    true_poses: Dict[str, RigidPose]
    settings: OracleSettings
    visibility: OptimizerSettings
    world: Optional[EsdfGrid] = None
    seed: int = 0
    log: Dict[str, VisibilityRecord] = field(default_factory=dict)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)
        self._last_t: Dict[str, float] = {}
        self._was_visible: Dict[str, bool] = {}
        self._current: Dict[str, RigidPose] = {}
        logger.info("PoseOracle initialized")

    def set_true_pose(self, name: str, pose: RigidPose) -> None:
        """物体が動いた (把持・設置) ときの真値更新"""
        self.true_poses[name] = pose

    def _noisy(self, pose: RigidPose) -> RigidPose:
        s = self.settings
        if s.sigma_pos == 0.0 and s.sigma_rot == 0.0:
            return pose
        dp = self._rng.normal(0.0, s.sigma_pos, 3) if s.sigma_pos > 0.0 else np.zeros(3)
        dr = self._rng.normal(0.0, s.sigma_rot, 3) if s.sigma_rot > 0.0 else np.zeros(3)
        rot = Rotation.from_rotvec(dr) * Rotation.from_quat(pose.rotation)
        return RigidPose(rot.as_quat(), pose.translation + dp)

    def observe(self, name: str, camera: RigidPose, t: float) -> Optional[RigidPose]:
        """
        時刻 t の推定

        Args:
            name: タスク名
            camera: カメラのワールド姿勢
            t: シミュレーション時刻 (s, 非減少)

        Returns:
            推定姿勢。まだ推定が無ければ None
        """
        record = self.log.setdefault(name, VisibilityRecord())
        previous = self._last_t.get(name)
        self._last_t[name] = t
        truth = self.true_poses[name]
        visible = target_visible(camera, truth.translation, self.visibility, self.world)
        # 区間 (前回, t] は前回時点で可視なら加算
        if previous is not None and self._was_visible.get(name, False):
            record.visible_time += t - previous
        self._was_visible[name] = visible
        if visible and record.first_visible is None:
            record.first_visible = t
        if record.visible_time + 1e-9 < self.settings.init_delay:
            return None

        period = 1.0 / self.settings.rate
        due = record.last_update is None or t - record.last_update >= period - 1e-9
        if visible and due:
            self._current[name] = self._noisy(truth)
            record.last_update = t
            record.estimates += 1
            if record.first_estimate is None:
                record.first_estimate = t
                logger.info(f"First estimate for {name} at t={t:.2f}")
        return self._current.get(name)

    def mark_manipulation(self, name: str) -> None:
        """操作開始時点の累積可視時間を記録"""
        record = self.log.setdefault(name, VisibilityRecord())
        if record.visible_before_manipulation is None:
            record.visible_before_manipulation = record.visible_time

    def never_visible(self) -> List[str]:
        return [name for name, r in self.log.items() if r.first_visible is None]
