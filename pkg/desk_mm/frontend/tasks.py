"""
Desk Mobile Manipulation Toolkit - Task Model
物体中心のタスク定義とキーポイント列
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ParameterError
from ..geometry.se3 import RigidPose, interp_se3

TASK_KINDS = ("pick", "place", "drop", "operate")


@dataclass(frozen=True)
class GripperSwitch:
    """グリッパ指令の切替点 (タスク時刻 τ で open/closed)"""

    tau: float
    closed: bool


def default_gripper(kind: str, duration: float) -> Tuple[GripperSwitch, ...]:
    """kind ごとの既定グリッパ指令"""
    if kind == "pick":
        return (GripperSwitch(0.0, True),)
    if kind in ("place", "drop"):
        return (GripperSwitch(duration, False),)
    return (GripperSwitch(0.0, True), GripperSwitch(duration, False))


@dataclass(frozen=True)
class PlaceRegion:
    """置き場所の判定領域 (ワールド座標の直方体)"""

    center: Tuple[float, float, float]
    half_extents: Tuple[float, float, float]

    def contains(self, point: Sequence[float]) -> bool:
        d = np.abs(np.asarray(point, dtype=float) - np.asarray(self.center))
        return bool(np.all(d <= np.asarray(self.half_extents)))


@dataclass(frozen=True)
class TaskSpec:
    """
    物体中心タスク

    object_pose は計画に使う物体姿勢 (粗い初期値または最新推定)、
    motion は物体初期座標系での物体軌道のノット (τ, 姿勢)、
    grasps は物体座標系での手先把持姿勢の候補。
    """

    name: str
    kind: str
    object_pose: RigidPose
    grasps: Tuple[RigidPose, ...]
    duration: float = 0.0
    motion: Tuple[Tuple[float, RigidPose], ...] = ()
    gripper: Tuple[GripperSwitch, ...] = ()
    couple_to: Optional[int] = None
    perception: bool = False
    cmz: bool = False
    object_spheres: Tuple[Tuple[Tuple[float, float, float], float], ...] = ()
    place_region: Optional[PlaceRegion] = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ParameterError(f"Unknown task kind: {self.kind}", f"expected one of {TASK_KINDS}")
        if self.duration < 0.0:
            raise ParameterError("Task duration must be non-negative", str(self.duration))
        if not self.grasps:
            raise ParameterError("Task needs at least one grasp candidate", self.name)
        if not self.motion:
            object.__setattr__(self, "motion", ((0.0, RigidPose.identity()),))
        if not self.gripper:
            object.__setattr__(self, "gripper", default_gripper(self.kind, self.duration))

    @property
    def is_instant(self) -> bool:
        return self.duration == 0.0

    @property
    def holds_object(self) -> bool:
        """タスク終了時に物体を把持しているか"""
        return self.gripper[-1].closed

    def relative_motion(self, tau: float) -> RigidPose:
        """^oP_i(τ): ノット間をSE(3)補間"""
        knots = self.motion
        if tau <= knots[0][0] or len(knots) == 1:
            return knots[0][1]
        for (t0, p0), (t1, p1) in zip(knots[:-1], knots[1:]):
            if tau <= t1:
                alpha = 0.0 if t1 <= t0 else (tau - t0) / (t1 - t0)
                return interp_se3(p0, p1, alpha)
        return knots[-1][1]

    def object_pose_at(self, tau: float, estimate: Optional[RigidPose] = None) -> RigidPose:
        """P_t,i(τ) = P̂_oi · ^oP_i(τ)"""
        base = estimate if estimate is not None else self.object_pose
        return base @ self.relative_motion(tau)

    def ee_pose_at(self, tau: float, grasp: int, estimate: Optional[RigidPose] = None) -> RigidPose:
        """手先目標 P̄_t,i(τ) = P_t,i(τ) · ^oP_C,i"""
        return self.object_pose_at(tau, estimate) @ self.grasps[grasp]

    def gripper_state(self, tau: float, before: bool = False) -> bool:
        """τ における閉指令 (最初の切替点より前は place/drop のみ閉)"""
        closed = self.kind in ("place", "drop")
        for switch in self.gripper:
            if switch.tau < tau or (switch.tau == tau and not before):
                closed = switch.closed
        return closed

    def with_pose(self, pose: RigidPose) -> "TaskSpec":
        return replace(self, object_pose=pose)

    def with_grasps(self, grasps: Sequence[RigidPose]) -> "TaskSpec":
        return replace(self, grasps=tuple(grasps))


@dataclass(frozen=True)
class Keypoint:
    """キーポイント: 物体姿勢とタスク番号"""

    pose: RigidPose
    task_index: int
    tau: float
    local_index: int

    @property
    def is_task_start(self) -> bool:
        return self.local_index == 0


def discretize_tasks(tasks: Sequence[TaskSpec], dt_sample: float) -> List[Keypoint]:
    """
    タスク軌道を時間一様にサンプリングして連結

    瞬時タスクは1点、それ以外は ⌈T/dt⌉+1 点。
    """
    if dt_sample <= 0.0:
        raise ParameterError("Keypoint sample interval must be positive", str(dt_sample))
    keypoints: List[Keypoint] = []
    for index, task in enumerate(tasks):
        if task.is_instant:
            taus = [0.0]
        else:
            count = int(math.ceil(task.duration / dt_sample - 1e-9)) + 1
            taus = list(np.linspace(0.0, task.duration, count))
        for local, tau in enumerate(taus):
            keypoints.append(Keypoint(task.object_pose_at(tau), index, float(tau), local))
    return keypoints


def continues_from(keypoints: Sequence[Keypoint], tasks: Sequence[TaskSpec], k: int) -> Optional[int]:
    """
    把持を継承すべき先行キーポイントのタスク番号

    同一タスク内の2点目以降は自タスク、結合タスクの1点目は結合先タスク。
    """
    kp = keypoints[k]
    if not kp.is_task_start:
        return kp.task_index
    return tasks[kp.task_index].couple_to
