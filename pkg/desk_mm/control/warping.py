"""
Desk Mobile Manipulation Toolkit - Trajectory Warping
最新の物体姿勢推定に合わせて計画手先軌道を剛体的に付け替える
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..backend.planner import PlanResult
from ..exceptions import WarpScheduleError
from ..frontend.tasks import TaskSpec
from ..geometry.se3 import RigidPose, interp_se3
from ..geometry.smooth import alpha_poly
from .reference import ReferenceTrajectory

logger = logging.getLogger(__name__)


@dataclass
class WarpWindow:
    """
    1タスク分のワーピング窓

    操作区間は [t_ks, t_ke)、拡張区間は [t̂_s, t̂_e)、
    ワーピング区間は [t̂_s − T_sw, t̂_e + T_sw)。
    """

    task: TaskSpec
    grasp: int
    t_ks: float
    t_ke: float
    pre: float
    post: float
    switch_duration: float
    ref_start: RigidPose
    ref_end: RigidPose

    @property
    def name(self) -> str:
        return self.task.name

    @property
    def t_hat_s(self) -> float:
        return self.t_ks - self.pre

    @property
    def t_hat_e(self) -> float:
        return self.t_ke + self.post

    @property
    def outer_start(self) -> float:
        return self.t_hat_s - self.switch_duration

    @property
    def outer_end(self) -> float:
        return self.t_hat_e + self.switch_duration

    def contains(self, t: float) -> bool:
        return self.outer_start <= t < self.outer_end

    def edges(self) -> List[float]:
        return [self.outer_start, self.t_hat_s, self.t_ks, self.t_ke, self.t_hat_e, self.outer_end]

    def phase(self, t: float) -> float:
        """操作区間の時刻を τ ∈ [0, duration] に写す (t_ke で τ = duration)"""
        if self.t_ke <= self.t_ks:
            return 0.0
        return self.task.duration * min(max((t - self.t_ks) / (self.t_ke - self.t_ks), 0.0), 1.0)

    def target(self, tau: float, estimate: Optional[RigidPose]) -> RigidPose:
        """P̄_t(τ): 推定姿勢に載せた手先目標"""
        tau = min(max(tau, 0.0), self.task.duration)
        return self.task.ee_pose_at(tau, self.grasp, estimate)


@dataclass
class WarpSchedule:
    """ワーピング窓の列と最新推定"""

    windows: List[WarpWindow]
    switch_duration: float
    estimates: Dict[str, RigidPose] = field(default_factory=dict)

    def __post_init__(self):
        self.windows = sorted(self.windows, key=lambda w: w.outer_start)
        for prev, nxt in zip(self.windows[:-1], self.windows[1:]):
            if prev.outer_end > nxt.outer_start + 1e-12:
                raise WarpScheduleError(
                    "Warping windows overlap",
                    f"{prev.name} ends {prev.outer_end:.3f} s, {nxt.name} starts {nxt.outer_start:.3f} s")

    @classmethod
    def from_plan(cls, plan: PlanResult, reference: ReferenceTrajectory, switch_duration: float,
                  estimates: Optional[Dict[str, RigidPose]] = None) -> "WarpSchedule":
        """
        計画結果からスケジュールを構築

        T_s, T_e は計画のESI窓 (α_m T_{κ_s}, α_m T_{κ_e+1}) を使う。

        Args:
            plan: PlanResult
            reference: 同じ計画の参照軌道
            switch_duration: T_sw (s)
            estimates: タスク名 → 最新推定

        Raises:
            WarpScheduleError: 窓が重なる場合
        """
        windows = [WarpWindow(p.task, p.grasp, p.t_start, p.t_end, p.pre_window, p.post_window,
                              switch_duration, reference.ee_pose(p.t_start), reference.ee_pose(p.t_end))
                   for p in plan.planned]
        return cls(windows, switch_duration, dict(estimates or {}))

    @classmethod
    def empty(cls, switch_duration: float) -> "WarpSchedule":
        return cls([], switch_duration)

    def update_estimate(self, name: str, pose: RigidPose) -> None:
        self.estimates[name] = pose

    def estimate(self, window: WarpWindow) -> RigidPose:
        return self.estimates.get(window.name, window.task.object_pose)

    def window_at(self, t: float) -> Optional[WarpWindow]:
        return next((w for w in self.windows if w.contains(t)), None)

    def boundaries(self) -> List[float]:
        """区分の境界時刻 (連続性検査用)"""
        return [edge for w in self.windows for edge in w.edges()]


BRANCHES = ("before", "approach_blend", "approach", "task", "depart", "depart_blend", "after")


def branch_index(window: WarpWindow, t: float) -> int:
    """t が属する区分 (BRANCHES の番号)"""
    edges = window.edges()
    index = 0
    for edge in edges:
        if t >= edge:
            index += 1
    return index


def warp_branch(reference: ReferenceTrajectory, window: WarpWindow, estimate: RigidPose, branch: int,
                t: float) -> RigidPose:
    """
    区分 branch の式で t の参照を評価 (境界の両側からの比較用)

    Args:
        reference: 名目参照軌道
        window: ワーピング窓
        estimate: 物体姿勢推定
        branch: BRANCHES の番号
        t: 絶対時刻
    """
    nominal = reference.ee_pose(t)
    tsw = window.switch_duration
    if branch in (0, 6):
        return nominal
    if branch == 1:
        alpha = alpha_poly(1.0 - (window.t_hat_s - t) / tsw)
        blend = interp_se3(window.ref_start, window.target(0.0, estimate), alpha)
        return blend @ (window.ref_start.inverse() @ nominal)
    if branch == 2:
        return window.target(0.0, estimate) @ (window.ref_start.inverse() @ nominal)
    if branch == 3:
        return window.target(window.phase(t), estimate)
    end_target = window.target(window.task.duration, estimate)
    if branch == 4:
        return end_target @ (window.ref_end.inverse() @ nominal)
    alpha = alpha_poly(1.0 - (t - window.t_hat_e) / tsw)
    blend = interp_se3(window.ref_end, end_target, alpha)
    return blend @ (window.ref_end.inverse() @ nominal)


def warp_reference(reference: ReferenceTrajectory, schedule: WarpSchedule, t: float) -> RigidPose:
    """
    ワーピングした手先参照

    窓内では最新推定の操作姿勢に合わせ、接近・離脱の相対運動を剛体的に付け替える。
    窓の外は名目参照 P_ee^ref(t)。

    Args:
        reference: 名目参照軌道
        schedule: ワーピングスケジュール
        t: 絶対時刻

    Returns:
        手先の目標姿勢
    """
    window = schedule.window_at(t)
    if window is None:
        return reference.ee_pose(t)
    return warp_branch(reference, window, schedule.estimate(window), branch_index(window, t), t)


def boundary_jumps(reference: ReferenceTrajectory, schedule: WarpSchedule) -> List[Tuple[float, float, float]]:
    """
    各区分境界で左右の式を同じ時刻に評価した差

    Returns:
        (境界時刻, 位置の差 m, 姿勢の差 rad) のリスト
    """
    out: List[Tuple[float, float, float]] = []
    for window in schedule.windows:
        estimate = schedule.estimate(window)
        for k, edge in enumerate(window.edges()):
            left = warp_branch(reference, window, estimate, k, edge)
            right = warp_branch(reference, window, estimate, k + 1, edge)
            pos = float(np.linalg.norm(left.translation - right.translation))
            rot = float((Rotation.from_quat(left.rotation).inv() * Rotation.from_quat(right.rotation)).magnitude())
            out.append((edge, pos, rot))
    return out


def warped_or_nominal(reference: ReferenceTrajectory, schedule: Optional[WarpSchedule], t: float,
                      enabled: bool = True) -> RigidPose:
    """ワーピング無効 (アブレーション) なら名目参照"""
    if not enabled or schedule is None:
        return reference.ee_pose(t)
    return warp_reference(reference, schedule, t)
