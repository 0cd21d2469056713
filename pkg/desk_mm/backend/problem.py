"""
Desk Mobile Manipulation Toolkit - Optimization Problem
ウォームスタートからの最適化問題の組み立て
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.settings import GeometrySettings, OptimizerSettings
from ..exceptions import ParameterError
from ..frontend.arm_search import WholeBodyPath
from ..frontend.tasks import TaskSpec
from ..geometry.ellipse import Ellipse2
from ..geometry.se3 import RigidPose
from ..geometry.smooth import SmoothParams
from ..robot.description import RobotDescription
from ..trajectory.minco import BoundaryCondition, PiecewiseTrajectory, fit_min_effort
from ..trajectory.time_map import free_from_positive, positive_from_free
from ..world.esdf import EsdfGrid
from ..world.obstacles import DynamicObstacle
from .constraints import ConstraintTerm, TimeSet

logger = logging.getLogger(__name__)

ORDER_S = 3


@dataclass(frozen=True)
class HeldObject:
    """実行済みの把持: release_task の開始まで物体を保持する"""

    release_task: int
    grasp: RigidPose
    spheres: Tuple[Tuple[Tuple[float, float, float], float], ...]


@dataclass(frozen=True)
class DecisionLayout:
    """決定変数 z = [Q_m, ξ_T, q_f, T_p] の配置"""

    segments: int
    dim: int
    perception: int

    @property
    def waypoints(self) -> slice:
        return slice(0, (self.segments - 1) * self.dim)

    @property
    def free_durations(self) -> slice:
        start = self.waypoints.stop
        return slice(start, start + self.segments)

    @property
    def final(self) -> slice:
        start = self.free_durations.stop
        return slice(start, start + self.dim)

    @property
    def perception_durations(self) -> slice:
        start = self.final.stop
        return slice(start, start + self.perception)

    @property
    def size(self) -> int:
        return self.perception_durations.stop


@dataclass
class OptimizationProblem:
    """
    軌道最適化問題

    区間数・タスク区間 κ・選択把持は最適化中固定。
    """

    desc: RobotDescription
    tasks: List[TaskSpec]
    world: Optional[EsdfGrid]
    obstacles: List[DynamicObstacle]
    settings: OptimizerSettings
    geometry: GeometrySettings
    layout: DecisionLayout
    start: BoundaryCondition
    end_derivatives: np.ndarray
    kappa: List[int]
    phases: List[Tuple[int, int]]
    grasps: List[int]
    perception_tasks: List[int]
    terms: List[ConstraintTerm]
    x0: np.ndarray
    cmz_ellipses: Dict[int, Ellipse2] = field(default_factory=dict)
    time_origin: float = 0.0
    warm_start: Optional[WholeBodyPath] = None
    held: Optional[HeldObject] = None

    @property
    def weight_time(self) -> float:
        return self.settings.weight_time

    @property
    def weight_perception(self) -> float:
        return self.settings.weight_perception

    @property
    def smooth(self) -> SmoothParams:
        return SmoothParams(self.geometry.mu)

    @property
    def ray_smooth(self) -> SmoothParams:
        return SmoothParams(self.geometry.ray_mu)

    @property
    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        """T_p,i ≥ T_p,min のみ箱制約、他は無制約"""
        free = [(None, None)] * self.layout.perception_durations.start
        return free + [(self.settings.tp_min, None)] * self.layout.perception

    def count(self, kind: str) -> int:
        return sum(1 for term in self.terms if term.kind == kind)

    def decode(self, z: np.ndarray) -> Tuple[PiecewiseTrajectory, np.ndarray, np.ndarray]:
        """
        決定変数から軌道を復元

        Returns:
            (軌道, T_p, dT/dξ)
        """
        layout = self.layout
        z = np.asarray(z, dtype=float)
        T, dT = positive_from_free(z[layout.free_durations])
        waypoints = z[layout.waypoints].reshape(layout.segments - 1, layout.dim)
        end = BoundaryCondition(z[layout.final], self.end_derivatives)
        Tp = z[layout.perception_durations].copy()
        perception = {task: float(Tp[p]) for p, task in enumerate(self.perception_tasks)}
        traj = fit_min_effort(waypoints, T, self.start, end, ORDER_S, perception)
        return traj, Tp, dT

    def encode(self, waypoints: np.ndarray, durations: Sequence[float], final: Sequence[float],
               perception: Sequence[float]) -> np.ndarray:
        """軌道パラメータから決定変数"""
        layout = self.layout
        z = np.zeros(layout.size)
        z[layout.waypoints] = np.asarray(waypoints, dtype=float).reshape(-1)
        z[layout.free_durations] = free_from_positive(np.asarray(durations, dtype=float))
        z[layout.final] = np.asarray(final, dtype=float)
        z[layout.perception_durations] = np.asarray(perception, dtype=float)
        return z


def _heading_velocity(psi: float, speed: float, dim: int) -> np.ndarray:
    v = np.zeros(dim)
    v[0] = speed * np.cos(psi)
    v[1] = speed * np.sin(psi)
    return v


def rest_boundary(position: np.ndarray, psi: float, v_min: float) -> BoundaryCondition:
    """
    停止に最も近い端点条件

    ヨーは速度方向から決まるので、ベースは向き ψ に v_min で動いている扱い。
    """
    dim = len(position)
    return BoundaryCondition(position, np.vstack([_heading_velocity(psi, v_min, dim), np.zeros(dim)]))


def _task_taus(path: WholeBodyPath, task_index: int, task: TaskSpec) -> Tuple[float, ...]:
    if task.is_instant:
        return (0.0,)
    taus = [kp.tau for kp in path.keypoints if kp.task_index == task_index]
    return tuple(taus) if taus else (0.0, task.duration)


def _release_task(tasks: Sequence[TaskSpec], holder: int) -> Optional[int]:
    for index in range(holder + 1, len(tasks)):
        if tasks[index].couple_to == holder:
            return index
    return None


def _sphere_targets(world: EsdfGrid, spheres, poses: Sequence[RigidPose]):
    targets = []
    for local, _ in spheres:
        per_sphere = []
        for pose in poses:
            p_t = pose.transform_point(local)
            per_sphere.append((p_t, world.value(p_t)))
        targets.append(per_sphere)
    return targets


def assemble(warm_start: WholeBodyPath,
             tasks: Sequence[TaskSpec],
             world: Optional[EsdfGrid],
             desc: RobotDescription,
             cmz_ellipses: Optional[Dict[int, Ellipse2]] = None,
             settings: Optional[OptimizerSettings] = None,
             geometry: Optional[GeometrySettings] = None,
             obstacles: Sequence[DynamicObstacle] = (),
             start: Optional[BoundaryCondition] = None,
             durations: Optional[Sequence[float]] = None,
             waypoints: Optional[np.ndarray] = None,
             time_origin: float = 0.0,
             held: Optional[HeldObject] = None) -> OptimizationProblem:
    """
    最適化問題の組み立て

    Args:
        warm_start: フロントエンドの全身経路 (κ・把持は固定される)
        tasks: アクティブなタスク列 (最新推定姿勢を反映済み)
        world: ESDF (None なら環境衝突・遮蔽・ECSなし)
        desc: ロボット記述
        cmz_ellipses: タスク番号 → 補償楕円
        settings: 最適化設定
        obstacles: 動的障害物 (time_origin 基準の予測)
        start: 初期端点条件 (None なら経路始点から v_min で発進)
        durations: 初期区間時間 (None なら initial_duration で一様)
        waypoints: 初期経由点・終端 (M+1)×dim (None ならウォームスタートの状態)
        time_origin: 軌道 t=0 の絶対時刻
        held: 保持中の物体

    Returns:
        OptimizationProblem

    Raises:
        ParameterError: 次元不整合、経由点不足、時刻集合が軌道外
    """
    settings = settings or OptimizerSettings()
    geometry = geometry or GeometrySettings()
    states = warm_start.states
    if len(states) < 2:
        raise ParameterError("Warm start needs at least two waypoints", str(len(states)))
    dim = desc.dim
    for state in states:
        if len(state.arm) != desc.joint_count:
            raise ParameterError("Warm-start arm dimension does not match robot",
                                 f"{len(state.arm)} != {desc.joint_count}")
    if len(warm_start.phases) != len(tasks) or len(warm_start.grasps) != len(tasks):
        raise ParameterError("Warm start does not match task list",
                             f"phases={len(warm_start.phases)}, tasks={len(tasks)}")

    X = np.array([s.configuration() for s in states]) if waypoints is None else np.asarray(waypoints, dtype=float)
    if X.shape != (len(states), dim):
        raise ParameterError("Initial waypoints have wrong shape", f"{X.shape} vs {(len(states), dim)}")
    M = len(states) - 1
    v_min = desc.base.v_min
    start = start or rest_boundary(X[0], states[0].yaw, v_min)
    if len(start.position) != dim:
        raise ParameterError("Start boundary dimension mismatch", f"{len(start.position)} != {dim}")
    end_derivatives = np.vstack([_heading_velocity(states[-1].yaw, v_min, dim), np.zeros(dim)])
    T0 = np.full(M, settings.initial_duration) if durations is None else np.asarray(durations, dtype=float)
    if T0.shape != (M,) or np.any(T0 <= 0.0):
        raise ParameterError("Initial durations must be positive, one per segment", str(T0))

    phases = [tuple(p) for p in warm_start.phases]
    active = [i for i, (ks, _) in enumerate(phases) if ks >= 0]
    perception_tasks = [i for i in active if tasks[i].perception] if settings.enable_tap else []
    p_index = {task: p for p, task in enumerate(perception_tasks)}

    terms: List[ConstraintTerm] = []
    all_segments = TimeSet("segments", first=0, last=M - 1)
    for kind in ("wheel_velocity", "wheel_acceleration", "min_base_velocity",
                 "joint_position", "joint_velocity", "joint_acceleration"):
        terms.append(ConstraintTerm(kind, all_segments))
    if world is not None:
        terms.append(ConstraintTerm("env_collision", all_segments))
    if len(obstacles):
        terms.append(ConstraintTerm("dyn_collision", all_segments))
    if len(desc.self_collision_pairs):
        terms.append(ConstraintTerm("self_collision", all_segments))

    alpha = settings.alpha_m
    window = settings.window_samples
    previous_end = 0
    for i in active:
        task = tasks[i]
        ks, ke = phases[i]
        grasp_index = warm_start.grasps[i]
        taus = _task_taus(warm_start, i, task)
        targets = [task.ee_pose_at(tau, grasp_index) for tau in taus]
        task_times = TimeSet("task", knot=ks, taus=taus)
        terms.append(ConstraintTerm("task_position", task_times, {"task": i, "targets": targets}))
        terms.append(ConstraintTerm("task_orientation", task_times, {"task": i, "targets": targets}))
        if task.is_instant:
            terms.append(ConstraintTerm("instant_task_velocity", TimeSet("knot", knot=ks), {"task": i}))
        else:
            terms.append(ConstraintTerm("task_duration", TimeSet("none"),
                                        {"task": i, "segments": (ks, ke), "duration": task.duration}))

        if i in p_index:
            p = p_index[i]
            terms.append(ConstraintTerm("tap_window", TimeSet("none"),
                                        {"task": i, "segments": (previous_end, ks), "perception": p}))
            view = TimeSet("perception", knot=ks, perception=p, count=settings.visibility_samples)
            target = task.object_pose_at(0.0).translation
            modes = ["visibility_fov", "visibility_range"] + (["visibility_occlusion"] if world is not None else [])
            for kind in modes:
                terms.append(ConstraintTerm(kind, view, {"task": i, "target": target}))

        if settings.enable_cmz and task.cmz and cmz_ellipses and i in cmz_ellipses:
            terms.append(ConstraintTerm("cmz", TimeSet("knot", knot=ks), {"task": i, "ellipse": cmz_ellipses[i]}))

        if settings.enable_esi:
            if task.kind in ("pick", "operate") and ks >= 1:
                pose = task.ee_pose_at(0.0, grasp_index)
                seg = ks - 1
                terms.append(ConstraintTerm("esi_pre", TimeSet("segments", first=seg, last=seg,
                                                               interval=(1.0 - alpha, 1.0), count=window),
                                            {"task": i, "pose": pose, "mode": "band"}))
                terms.append(ConstraintTerm("esi_pre", TimeSet("segments", first=seg, last=seg,
                                                               interval=(1.0 - alpha, 1.0 - alpha), count=1,
                                                               weighted=False),
                                            {"task": i, "pose": pose, "mode": "anchor"}))
            if task.kind in ("place", "drop", "operate") and ke <= M - 1:
                pose = task.ee_pose_at(task.duration, grasp_index)
                terms.append(ConstraintTerm("esi_post", TimeSet("segments", first=ke, last=ke,
                                                                interval=(0.0, alpha), count=window),
                                            {"task": i, "pose": pose, "mode": "band"}))
                terms.append(ConstraintTerm("esi_post", TimeSet("segments", first=ke, last=ke,
                                                                interval=(alpha, alpha), count=1, weighted=False),
                                            {"task": i, "pose": pose, "mode": "anchor"}))

        if settings.enable_ecs and world is not None and task.holds_object and task.object_spheres:
            release = _release_task(tasks, i)
            poses = [task.object_pose_at(task.duration)]
            last = M - 1
            if release is not None and phases[release][0] >= 0:
                poses.append(tasks[release].object_pose_at(0.0))
                last = phases[release][0] - 1
            if last >= ke:
                grasp = task.grasps[grasp_index]
                terms.append(ConstraintTerm("ecs_object_safety", TimeSet("segments", first=ke, last=last),
                                            {"task": i, "spheres": task.object_spheres,
                                             "grasp_inverse": grasp.inverse().matrix,
                                             "targets": _sphere_targets(world, task.object_spheres, poses)}))
        previous_end = ke

    if held is not None and settings.enable_ecs and world is not None and held.spheres:
        release_start = phases[held.release_task][0] if 0 <= held.release_task < len(phases) else -1
        last = release_start - 1 if release_start >= 0 else M - 1
        if last >= 0:
            poses = [tasks[held.release_task].object_pose_at(0.0)] if release_start >= 0 else []
            targets = _sphere_targets(world, held.spheres, poses) if poses else [[] for _ in held.spheres]
            terms.append(ConstraintTerm("ecs_object_safety", TimeSet("segments", first=0, last=last),
                                        {"task": held.release_task, "spheres": held.spheres,
                                         "grasp_inverse": held.grasp.inverse().matrix, "targets": targets}))

    for term in terms:
        if any(k < 0 or k > M for k in term.time_set.knots()):
            raise ParameterError("Constraint time set outside trajectory", f"{term.kind}: {term.time_set}")

    layout = DecisionLayout(M, dim, len(perception_tasks))
    problem = OptimizationProblem(
        desc=desc, tasks=list(tasks), world=world, obstacles=list(obstacles), settings=settings,
        geometry=geometry, layout=layout, start=start, end_derivatives=end_derivatives,
        kappa=list(warm_start.kappa), phases=phases, grasps=list(warm_start.grasps),
        perception_tasks=perception_tasks, terms=terms, x0=np.zeros(layout.size),
        cmz_ellipses=dict(cmz_ellipses or {}), time_origin=time_origin, warm_start=warm_start, held=held)
    problem.x0 = problem.encode(X[1:M], T0, X[M], [settings.tp_min] * len(perception_tasks))
    logger.info(f"Problem assembled: {M} segments, {len(terms)} constraint terms, "
                f"{len(perception_tasks)} perception windows")
    return problem
