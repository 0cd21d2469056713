"""
Desk Mobile Manipulation Toolkit - Kinematic Simulator
差動二輪ベース + 関節速度指令の運動学シミュレータと物体の付け外し
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ..core.settings import SimSettings
from ..geometry.se3 import RigidPose
from ..robot.description import RobotDescription
from ..robot.kinematics import collision_sphere_positions, fk_frame
from ..robot.state import WholeBodyState
from ..world.esdf import EsdfGrid
from ..world.obstacles import DynamicObstacle, predict_obstacle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VelocityCommand:
    """速度指令 (v_b, ω_b, q̇_m)"""

    v: float
    omega: float
    arm_velocity: np.ndarray


def step_sim(state: WholeBodyState, command: VelocityCommand, dt: float, desc: Optional[RobotDescription] = None,
             substep_rate: float = 1000.0) -> WholeBodyState:
    """
    1制御周期分の積分

    サブステップ内の指令は一定。ベースは一輪車の厳密な円弧で、関節は
    オイラー積分して関節制限でクリップする。

    Args:
        state: 現在状態
        command: 速度指令
        dt: 周期 (s, > 0)
        desc: 関節制限 (None なら制限なし)
        substep_rate: サブステップのレート (Hz)
    """
    steps = max(1, int(round(dt * substep_rate)))
    h = dt / steps
    x, y, psi = (float(v) for v in state.base)
    arm = state.arm.copy()
    qd = np.asarray(command.arm_velocity, dtype=float)
    v, w = float(command.v), float(command.omega)
    for _ in range(steps):
        if abs(w) > 1e-12:
            x += v / w * (math.sin(psi + w * h) - math.sin(psi))
            y -= v / w * (math.cos(psi + w * h) - math.cos(psi))
        else:
            x += v * h * math.cos(psi)
            y += v * h * math.sin(psi)
        psi += w * h
        arm = arm + h * qd
        if desc is not None:
            arm = np.clip(arm, desc.q_min, desc.q_max)
    return WholeBodyState([x, y, math.atan2(math.sin(psi), math.cos(psi))], arm)


@dataclass
class Attachment:
    """把持中の物体 (手先座標系での物体姿勢)"""

    name: str
    ee_to_object: RigidPose
    grasp: RigidPose


class KinematicSimulator:
    """
    閉ループ用シミュレータ

    物体は把持判定に成功したときだけ手先に固定され、離すと設置 (place) または
    落下 (drop) する。接触力学は扱わない。
    """

    def __init__(self, desc: RobotDescription, state: WholeBodyState, objects: Dict[str, RigidPose],
                 world: Optional[EsdfGrid] = None, obstacles: Sequence[DynamicObstacle] = (),
                 settings: Optional[SimSettings] = None, seed: int = 0):
        """
        初期化

        Args:
            desc: ロボット記述
            state: 初期状態
            objects: 物体名 → 真の姿勢
            world: 静的環境のESDF
            obstacles: 動的障害物
            settings: シミュレーション設定
            seed: 指令ノイズの乱数種
        """
        self.desc = desc
        self.state = state
        self.objects = dict(objects)
        self.world = world
        self.obstacles = list(obstacles)
        self.settings = settings or SimSettings()
        self.t = 0.0
        self.attached: Optional[Attachment] = None
        self._rng = np.random.default_rng(seed)
        logger.info("KinematicSimulator initialized")

    def ee_pose(self) -> RigidPose:
        return fk_frame(self.desc, self.state, "ee")

    def camera_pose(self) -> RigidPose:
        return fk_frame(self.desc, self.state, "camera")

    def _noisy(self, command: VelocityCommand) -> VelocityCommand:
        sigma = self.settings.command_noise
        if sigma <= 0.0:
            return command
        n = self._rng.normal(0.0, sigma, 2 + len(command.arm_velocity))
        return VelocityCommand(command.v + n[0], command.omega + n[1],
                               np.asarray(command.arm_velocity) + n[2:])

    def step(self, command: VelocityCommand, dt: float) -> WholeBodyState:
        """指令を dt だけ適用し、把持物体を追従させる"""
        self.state = step_sim(self.state, self._noisy(command), dt, self.desc, self.settings.substep_rate)
        self.t += dt
        if self.attached is not None:
            self.objects[self.attached.name] = self.ee_pose() @ self.attached.ee_to_object
        return self.state

    def grasp(self, name: str, grasp: RigidPose) -> Tuple[bool, float, float]:
        """
        把持判定 (手先が真の把持姿勢から許容内なら固定)

        Returns:
            (成功, 位置誤差 m, 回転誤差 rad)
        """
        ee = self.ee_pose()
        target = self.objects[name] @ grasp
        pos_err, rot_err = ee.distance_to(target)
        ok = (pos_err <= self.settings.grasp_position_tolerance
              and rot_err <= self.settings.grasp_orientation_tolerance)
        if ok:
            self.attached = Attachment(name, ee.inverse() @ self.objects[name], grasp)
            logger.info(f"Grasped {name}: error {pos_err:.4f} m / {rot_err:.3f} rad")
        else:
            logger.warning(f"Grasp of {name} failed: error {pos_err:.4f} m / {rot_err:.3f} rad")
        return ok, pos_err, rot_err

    def release(self, drop_height: Optional[float] = None) -> Optional[Tuple[str, RigidPose]]:
        """
        把持物体を離す

        Args:
            drop_height: 落下後の z (None なら現在位置に設置)

        Returns:
            (物体名, 最終姿勢)。何も持っていなければ None
        """
        if self.attached is None:
            return None
        name = self.attached.name
        pose = self.objects[name]
        if drop_height is not None:
            pose = RigidPose.from_planar(pose.translation[0], pose.translation[1], pose.yaw, drop_height)
        self.objects[name] = pose
        self.attached = None
        return name, pose

    def collision(self) -> Optional[str]:
        """衝突の有無 (静的環境・動的障害物)。衝突していれば説明を返す"""
        xy = self.state.xy
        for obstacle in self.obstacles:
            gap = (float(np.linalg.norm(xy - predict_obstacle(obstacle, self.t)))
                   - obstacle.radius - self.desc.base.footprint_radius)
            if gap < -self.settings.collision_tolerance:
                return f"dynamic obstacle at t={self.t:.2f}"
        if self.world is None:
            return None
        spheres = collision_sphere_positions(self.desc, self.state)
        centers = np.array([c for c, _, _ in spheres])
        radii = np.array([r for _, r, _ in spheres])
        dist, _, _ = self.world.query_batch(centers)
        worst = int(np.argmin(dist - radii))
        if dist[worst] - radii[worst] < -self.settings.collision_tolerance:
            return f"link {spheres[worst][2]} penetrates by {radii[worst] - dist[worst]:.3f} m"
        return None
