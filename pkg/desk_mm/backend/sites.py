"""
Desk Mobile Manipulation Toolkit - Sample Sites
制約サンプル時刻と、その時刻での運動学スナップショット
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np

from ..robot.description import RobotDescription
from ..robot.kinematics import KinematicChain, compute_chain, frame_matrix, point_jacobians, sphere_world_centers
from ..trajectory.minco import PiecewiseTrajectory

_B = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass
class SampleSite:
    """
    軌道上のサンプル点

    時刻 t は区間 segment 内の τ に対応する。dtau_dT / dt_dT は区間時間 T に関する
    微分、dtau_dTp / dt_dTp は知覚時間 T_p に関する微分。
    """

    time: float
    segment: int
    tau: float
    dtau_dT: np.ndarray
    dtau_dTp: np.ndarray
    dt_dT: np.ndarray
    dt_dTp: np.ndarray
    weight: float = 1.0
    tag: int = 0


def segment_site(traj: PiecewiseTrajectory, segment: int, fraction: float, perception_count: int,
                 weight: float = 1.0, tag: int = 0) -> SampleSite:
    """区間内の比率 fraction に固定したサンプル (τ = fraction·T_j)"""
    M = traj.segment_count
    T_j = float(traj.durations[segment])
    dtau = np.zeros(M)
    dtau[segment] = fraction
    dt = np.zeros(M)
    dt[:segment] = 1.0
    dt[segment] = fraction
    zeros = np.zeros(perception_count)
    return SampleSite(float(traj.times[segment]) + fraction * T_j, segment, fraction * T_j,
                      dtau, zeros, dt, zeros.copy(), weight, tag)


def timed_site(traj: PiecewiseTrajectory, time: float, dt_dT: np.ndarray, dt_dTp: np.ndarray,
               weight: float = 1.0, tag: int = 0) -> SampleSite:
    """
    絶対時刻で指定したサンプル

    軌道範囲外の時刻は端点に丸め、丸めた側の時刻微分に置き換える。
    """
    M = traj.segment_count
    span = traj.total_duration
    dt_dT = np.asarray(dt_dT, dtype=float)
    dt_dTp = np.asarray(dt_dTp, dtype=float)
    if time <= 0.0:
        time, dt_dT, dt_dTp = 0.0, np.zeros(M), np.zeros_like(dt_dTp)
    elif time >= span:
        time, dt_dT, dt_dTp = span, np.ones(M), np.zeros_like(dt_dTp)
    segment, tau = traj.locate(time)
    dtau = dt_dT.copy()
    dtau[:segment] -= 1.0
    return SampleSite(float(time), segment, tau, dtau, dt_dTp.copy(), dt_dT.copy(), dt_dTp.copy(),
                      weight, tag)


def knot_site(traj: PiecewiseTrajectory, knot: int, perception_count: int, tag: int = 0) -> SampleSite:
    """区間境界 t̄_knot のサンプル (knot = M は終端)"""
    M = traj.segment_count
    if knot >= M:
        return segment_site(traj, M - 1, 1.0, perception_count, tag=tag)
    return segment_site(traj, knot, 0.0, perception_count, tag=tag)


@dataclass
class LocalGradient:
    """
    サンプル値の局所勾配

    derivs[k] は q^(k)(t) に関する勾配 (k = 0..3)、time は t への直接依存、
    T / Tp は区間時間・知覚時間への直接依存。
    """

    derivs: np.ndarray
    time: float = 0.0
    T: Optional[np.ndarray] = None
    Tp: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, dim: int) -> "LocalGradient":
        return cls(np.zeros((4, dim)))


class KinematicSnapshot:
    """
    サンプル時刻の全身状態

    ベースヨーは速度方向 ψ = atan2(ẏ, ẋ) から決まるので、
    ワールド点の勾配は q と q̇_b の2経路に分かれる。
    """

    def __init__(self, desc: RobotDescription, traj: PiecewiseTrajectory, site: SampleSite):
        self.desc = desc
        self.site = site
        self.q = np.array([traj.eval_segment(site.segment, site.tau, k) for k in range(4)])
        qd_b = self.q[1, :2]
        self.speed_sq = float(qd_b @ qd_b)
        self.psi = float(np.arctan2(qd_b[1], qd_b[0]))
        self.dpsi = _B @ qd_b / self.speed_sq if self.speed_sq > 1e-12 else np.zeros(2)
        self._cols = [0, 1] + list(range(3, 3 + desc.joint_count))
        self._frames: Dict[object, np.ndarray] = {}

    @property
    def base(self) -> np.ndarray:
        return np.array([self.q[0, 0], self.q[0, 1], self.psi])

    @property
    def arm(self) -> np.ndarray:
        return self.q[0, 2:]

    @cached_property
    def chain(self) -> KinematicChain:
        return compute_chain(self.desc, self.base, self.arm)

    @cached_property
    def sphere_centers(self) -> np.ndarray:
        return sphere_world_centers(self.desc, self.chain)

    def frame(self, name) -> np.ndarray:
        if name not in self._frames:
            self._frames[name] = frame_matrix(self.desc, self.chain, name)
        return self._frames[name]

    def point_grad(self, link: int, point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        リンク固定点の勾配

        Returns:
            (dp/dq 3×dim, dp/dq̇_b 3×2)
        """
        Jv, _ = point_jacobians(self.chain, link, point)
        return Jv[:, self._cols], np.outer(Jv[:, 2], self.dpsi)

    def rotation_grad(self, link: int) -> Tuple[np.ndarray, np.ndarray]:
        """リンク姿勢のワールド系摂動 δ の勾配 (dδ/dq, dδ/dq̇_b)"""
        _, Jw = point_jacobians(self.chain, link, self.chain.link(link)[:3, 3])
        return Jw[:, self._cols], np.outer(Jw[:, 2], self.dpsi)

    def pull_point(self, grad_p: np.ndarray, link: int, point: np.ndarray,
                   out: Optional[LocalGradient] = None) -> LocalGradient:
        """点に関する勾配を q, q̇ の局所勾配へ引き戻す"""
        out = out or LocalGradient.zeros(self.q.shape[1])
        Gq, Gqd = self.point_grad(link, point)
        out.derivs[0] += grad_p @ Gq
        out.derivs[1, :2] += grad_p @ Gqd
        return out

    def pull_rotation(self, grad_delta: np.ndarray, link: int,
                      out: Optional[LocalGradient] = None) -> LocalGradient:
        """回転摂動に関する勾配を局所勾配へ引き戻す"""
        out = out or LocalGradient.zeros(self.q.shape[1])
        Hq, Hqd = self.rotation_grad(link)
        out.derivs[0] += grad_delta @ Hq
        out.derivs[1, :2] += grad_delta @ Hqd
        return out
