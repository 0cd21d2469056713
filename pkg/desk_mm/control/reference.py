"""
Desk Mobile Manipulation Toolkit - Reference Sampling
計画軌道から制御器の参照状態・参照入力を取り出す
"""

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import SingularityError
from ..geometry.se3 import RigidPose
from ..robot.description import RobotDescription
from ..robot.kinematics import fk_frame
from ..robot.state import WholeBodyState
from ..robot.wheels import base_rates
from ..trajectory.minco import PiecewiseTrajectory


@dataclass(frozen=True)
class ReferenceSample:
    """
    時刻 t の参照

    base は (q_x, q_y, ψ, v_b, ω_b)、base_input は (a_b, α_b)。
    """

    t: float
    base: np.ndarray
    base_input: np.ndarray
    arm: np.ndarray
    arm_velocity: np.ndarray
    arm_acceleration: np.ndarray

    @property
    def state(self) -> WholeBodyState:
        return WholeBodyState(self.base[:3], self.arm)


def sample_trajectory(traj: PiecewiseTrajectory, t_local: float, fallback_yaw: float = 0.0) -> ReferenceSample:
    """
    軌道時刻 t_local の参照 (区間外は端点で静止)

    ヨーは速度方向。軌道終端以降は速度・加速度 0。
    """
    total = traj.total_duration
    beyond = t_local >= total or t_local < 0.0
    t_c = min(max(t_local, 0.0), total)
    q = traj.eval(t_c, 0)
    qd = traj.eval(t_c, 1)
    qdd = traj.eval(t_c, 2)
    qddd = traj.eval(t_c, 3)
    speed = float(np.hypot(qd[0], qd[1]))
    psi = math.atan2(qd[1], qd[0]) if speed > 1e-9 else fallback_yaw
    v = omega = a = alpha = 0.0
    if not beyond:
        try:
            rates = base_rates(qd[:2], qdd[:2], qddd[:2])
            v, omega, a, alpha = rates.speed, rates.omega, rates.accel, rates.alpha
        except SingularityError:
            pass
    arm_v = np.zeros(len(q) - 2) if beyond else qd[2:]
    arm_a = np.zeros(len(q) - 2) if beyond else qdd[2:]
    return ReferenceSample(t_local, np.array([q[0], q[1], psi, v, omega]), np.array([a, alpha]),
                           q[2:].copy(), arm_v.copy(), arm_a.copy())


class ReferenceTrajectory:
    """
    絶対時刻で引く参照軌道

    手先参照 P_ee^ref(t) は軌道の一般化座標から順運動学で求める。
    """

    def __init__(self, desc: RobotDescription, trajectory: PiecewiseTrajectory, time_origin: float = 0.0):
        self.desc = desc
        self.trajectory = trajectory
        self.time_origin = time_origin
        q0 = trajectory.eval(0.0, 1)
        self._start_yaw = math.atan2(q0[1], q0[0]) if np.hypot(q0[0], q0[1]) > 1e-9 else 0.0

    @property
    def t_end(self) -> float:
        return self.time_origin + self.trajectory.total_duration

    def sample(self, t: float) -> ReferenceSample:
        return sample_trajectory(self.trajectory, t - self.time_origin, self._start_yaw)

    def ee_pose(self, t: float) -> RigidPose:
        """P_ee^ref(t)"""
        return fk_frame(self.desc, self.sample(t).state, "ee")
