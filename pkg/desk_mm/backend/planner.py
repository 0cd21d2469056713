"""
Desk Mobile Manipulation Toolkit - Trajectory Planner
フロントエンド → CMZ → 最適化の計画と再計画
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..core.settings import ToolkitSettings
from ..error_handling.exception_handler import ExceptionHandler, create_error_context
from ..exceptions import CmzInfeasibleError, DeskMMException, OptimizationError
from ..frontend.arm_search import WholeBodyPath
from ..frontend.planner import FrontendPlanner
from ..frontend.tasks import TaskSpec
from ..geometry.ellipse import Ellipse2
from ..geometry.se3 import RigidPose
from ..logging.structured_logger import StructuredLogger
from ..performance.profiler import PerformanceProfiler
from ..reachability.cmz import compute_cmz, keypoint_ellipse
from ..reachability.irm import InverseReachabilityMap
from ..robot.description import RobotDescription
from ..robot.state import WholeBodyState
from ..trajectory.minco import BoundaryCondition, PiecewiseTrajectory
from ..world.esdf import EsdfGrid
from ..world.obstacles import DynamicObstacle
from .optimizer import BackendOptimizer, SolveReport
from .problem import HeldObject, OptimizationProblem, assemble

logger = logging.getLogger(__name__)

MIN_SPLICE_SEGMENT = 0.1


@dataclass
class PlannedTask:
    """計画に載ったタスク (時刻は絶対時刻)"""

    index: int
    task: TaskSpec
    grasp: int
    t_start: float
    t_end: float
    pre_window: float
    post_window: float

    @property
    def name(self) -> str:
        return self.task.name

    @property
    def grasp_pose(self) -> RigidPose:
        return self.task.grasps[self.grasp]

    def ee_pose_at(self, tau: float, estimate: Optional[RigidPose] = None) -> RigidPose:
        return self.task.ee_pose_at(tau, self.grasp, estimate)

    def critical(self, t: float) -> bool:
        """t が拡張操作区間 [t_s − T_s, t_e + T_e] 内か"""
        return self.t_start - self.pre_window <= t <= self.t_end + self.post_window


@dataclass
class PlanResult:
    """計画結果"""

    trajectory: PiecewiseTrajectory
    time_origin: float
    tasks: List[TaskSpec]
    planned: List[PlannedTask]
    report: Optional[SolveReport]
    problem: Optional[OptimizationProblem]
    warm_start: Optional[WholeBodyPath]
    status: str = "planned"
    planning_ms: float = 0.0
    budget_ratio: Optional[float] = None
    frontend_rerun: bool = True

    @property
    def t_end(self) -> float:
        return self.time_origin + self.trajectory.total_duration

    def local_time(self, t: float) -> float:
        return min(max(t - self.time_origin, 0.0), self.trajectory.total_duration)

    def state(self, t: float, order: int = 0) -> np.ndarray:
        """絶対時刻 t の q^(order) (軌道外は端点にクランプ)"""
        return self.trajectory.eval(self.local_time(t), order)

    def task(self, name: str) -> Optional[PlannedTask]:
        return next((p for p in self.planned if p.name == name), None)

    def retained(self, status: str) -> "PlanResult":
        return PlanResult(self.trajectory, self.time_origin, self.tasks, self.planned, self.report,
                          self.problem, self.warm_start, status, 0.0, None, False)


def _heading(velocity: np.ndarray, fallback: float) -> float:
    if float(np.hypot(velocity[0], velocity[1])) < 1e-9:
        return fallback
    return math.atan2(float(velocity[1]), float(velocity[0]))


def planned_tasks(problem: OptimizationProblem, traj: PiecewiseTrajectory,
                  time_origin: float) -> List[PlannedTask]:
    """位相・ESI窓から PlannedTask 列を作る"""
    times = traj.times
    M = traj.segment_count
    alpha = problem.settings.alpha_m
    out: List[PlannedTask] = []
    for i, (ks, ke) in enumerate(problem.phases):
        if ks < 0:
            continue
        pre = alpha * float(traj.durations[ks - 1]) if ks >= 1 else 0.0
        post = alpha * float(traj.durations[ke]) if ke <= M - 1 else 0.0
        out.append(PlannedTask(i, problem.tasks[i], problem.grasps[i], time_origin + float(times[ks]),
                               time_origin + float(times[ke]), pre, post))
    return out


def splice_boundary(traj: PiecewiseTrajectory, t_local: float) -> BoundaryCondition:
    """再計画の初期端点 (位置・速度・加速度を旧軌道から引き継ぐ)"""
    derivatives = np.vstack([traj.eval(t_local, k) for k in range(1, traj.s)])
    return BoundaryCondition(traj.eval(t_local, 0), derivatives)


class TrajectoryPlanner:
    """全身軌道プランナー"""

    def __init__(self, desc: RobotDescription, irm: InverseReachabilityMap,
                 settings: Optional[ToolkitSettings] = None, workers: int = 1,
                 profiler: Optional[PerformanceProfiler] = None,
                 op_logger: Optional[StructuredLogger] = None,
                 exception_handler: Optional[ExceptionHandler] = None):
        """
        初期化

        Args:
            desc: ロボット記述
            irm: 逆到達可能性マップ
            settings: ツールキット設定
            workers: フロントエンドの並列数
            profiler: 計測器
            op_logger: 求解・再計画記録
            exception_handler: 回復した失敗の記録先
        """
        self.desc = desc
        self.irm = irm
        self.settings = settings or ToolkitSettings()
        self.profiler = profiler or PerformanceProfiler()
        self.op_logger = op_logger
        self.exception_handler = exception_handler or ExceptionHandler()
        self.frontend = FrontendPlanner(desc, irm, self.settings.frontend, workers)
        self.optimizer = BackendOptimizer(self.settings.alm, self.profiler, op_logger)
        logger.info("TrajectoryPlanner initialized")

    def cmz_ellipses(self, tasks: Sequence[TaskSpec], path: WholeBodyPath,
                     world: Optional[EsdfGrid]) -> Dict[int, Ellipse2]:
        """CMZ対象タスクの把持瞬間の補償楕円"""
        out: Dict[int, Ellipse2] = {}
        if not self.settings.optimizer.enable_cmz:
            return out
        for i, task in enumerate(tasks):
            ks, _ = path.phases[i]
            if not task.cmz or ks < 0:
                continue
            nominal = task.ee_pose_at(0.0, path.grasps[i])
            try:
                region = compute_cmz(nominal, self.irm, world, self.settings.cmz,
                                     self.desc.base.footprint_radius)
            except CmzInfeasibleError as e:
                self.exception_handler.handle_exception(e, create_error_context("planner", "cmz", task=task.name))
                continue
            if region.ellipse is not None:
                out[i] = region.ellipse
        return out

    def _optimize(self, path: WholeBodyPath, tasks: Sequence[TaskSpec], world: Optional[EsdfGrid],
                  obstacles: Sequence[DynamicObstacle], start: Optional[BoundaryCondition],
                  durations: Optional[Sequence[float]], time_origin: float, held: Optional[HeldObject],
                  deadline: Optional[float]) -> PlanResult:
        ellipses = self.cmz_ellipses(tasks, path, world)
        problem = assemble(path, tasks, world, self.desc, ellipses, self.settings.optimizer,
                           self.settings.geometry, obstacles, start=start, durations=durations,
                           time_origin=time_origin, held=held)
        traj, report = self.optimizer.solve(problem, deadline)
        return PlanResult(traj, time_origin, list(tasks), planned_tasks(problem, traj, time_origin),
                          report, problem, path)

    def plan(self, start: WholeBodyState, tasks: Sequence[TaskSpec], world: Optional[EsdfGrid],
             obstacles: Sequence[DynamicObstacle] = (), held: Optional[HeldObject] = None,
             time_origin: float = 0.0, initial_grasps: Optional[Sequence[int]] = None,
             deadline: Optional[float] = None) -> PlanResult:
        """
        静止状態からの計画

        求解結果が ε_cons を満たさない場合は status="infeasible" で返す。

        Raises:
            UnreachableTaskError, SearchFailure, ArmSearchFailure: フロントエンドの失敗
        """
        with self.profiler.profile("planner.plan", tasks=len(tasks)) as record:
            path = self.frontend.plan(start, tasks, world, initial_grasps)
            result = self._optimize(path, tasks, world, obstacles, None, None, time_origin, held, deadline)
        result.planning_ms = record.duration_ms
        if self.op_logger is not None:
            self.op_logger.log_operation("planner.plan", result.report.status, record.duration_ms,
                                         tasks=[t.name for t in tasks])
        if not result.report.feasible:
            logger.warning(f"Initial plan infeasible: max violation {result.report.max_violation:.3e}")
        result.status = "planned" if result.report.feasible else "infeasible"
        return result

    def _shifted_warm_start(self, previous: PlanResult, tasks: Sequence[TaskSpec],
                            t_local: float) -> Optional[tuple]:
        """
        前回軌道を接続時刻以降で切り出したウォームスタート

        タスク列が変わった、既に始まったタスクがある、またはキーポイントのベース位置が
        更新後の到達楕円から外れた場合は None (フロントエンドを再実行する)。
        """
        warm = previous.warm_start
        if warm is None or [t.name for t in tasks] != [t.name for t in previous.tasks]:
            return None
        traj = previous.trajectory
        M = traj.segment_count
        j, tau = traj.locate(t_local)
        if any(ks >= 0 and ks <= j for ks, _ in warm.phases):
            return None

        kappa_knots = set(warm.kappa)
        times = traj.times
        knots = list(range(j + 1, M + 1))
        if (len(knots) > 1 and knots[0] not in kappa_knots
                and float(times[knots[0]]) - t_local < MIN_SPLICE_SEGMENT):
            knots = knots[1:]
        index = {old: new for new, old in enumerate(knots, start=1)}

        psi0 = _heading(traj.eval(t_local, 1), warm.states[min(j, len(warm.states) - 1)].yaw)
        q0 = traj.eval(t_local)
        states = [WholeBodyState([q0[0], q0[1], psi0], q0[2:])]
        for k in knots:
            q = traj.eval(float(times[k]))
            yaw = _heading(traj.eval(float(times[k]), 1), warm.states[k].yaw)
            states.append(WholeBodyState([q[0], q[1], yaw], q[2:]))
        durations = np.diff([t_local] + [float(times[k]) for k in knots])
        durations = np.maximum(durations, 1e-3)

        kappa = [index[k] for k in warm.kappa]
        phases = [(index[ks], index[ke]) if ks >= 0 else (-1, -1) for ks, ke in warm.phases]
        path = WholeBodyPath(states, kappa, phases, list(warm.grasps), list(warm.keypoints), warm.cost)

        for k, kp in enumerate(path.keypoints):
            task = tasks[kp.task_index]
            ellipse = keypoint_ellipse(task.object_pose_at(kp.tau), task.grasps, self.irm,
                                       self.settings.cmz.coverage)
            if not ellipse.contains(states[kappa[k]].xy, inflate=self.irm.base_resolution):
                logger.info(f"Keypoint {k} base left its reachability ellipse; re-running front end")
                return None
        return path, durations

    def replan(self, previous: PlanResult, tasks: Sequence[TaskSpec], t_splice: float,
               world: Optional[EsdfGrid], obstacles: Sequence[DynamicObstacle] = (),
               budget: Optional[float] = None, held: Optional[HeldObject] = None,
               initial_grasps: Optional[Sequence[int]] = None) -> PlanResult:
        """
        実行中の軌道の再計画

        接続時刻の位置・速度・加速度を初期端点にして最新推定のタスクで解き直す。
        予算超過・求解失敗・フロントエンド失敗では前回の軌道を返す。

        Args:
            previous: 実行中の計画
            tasks: アクティブなタスク列 (最新推定)
            t_splice: 接続時刻 (絶対)
            budget: 時間予算 (s)
            held: 保持中の物体

        Returns:
            PlanResult (status: replanned / retained / skipped)
        """
        begin = time.perf_counter()
        deadline = begin + budget if budget is not None else None
        t_local = previous.local_time(t_splice)
        remaining = previous.trajectory.total_duration - t_local
        if remaining <= MIN_SPLICE_SEGMENT:
            return previous.retained("skipped")
        if any(p.critical(t_splice) for p in previous.planned):
            logger.debug(f"Replan skipped inside task-critical phase at t={t_splice:.2f}")
            return previous.retained("skipped")

        boundary = splice_boundary(previous.trajectory, t_local)
        context = create_error_context("planner", "replan", sim_time=t_splice)
        try:
            with self.profiler.profile("planner.replan", tasks=len(tasks)) as record:
                shifted = self._shifted_warm_start(previous, tasks, t_local)
                rerun = shifted is None
                if rerun:
                    psi = _heading(boundary.derivatives[0], 0.0)
                    q = boundary.position
                    start = WholeBodyState([q[0], q[1], psi], q[2:])
                    path = self.frontend.plan(start, tasks, world, initial_grasps)
                    durations = None
                else:
                    path, durations = shifted
                result = self._optimize(path, tasks, world, obstacles, boundary, durations, t_splice, held,
                                        deadline)
        except DeskMMException as e:
            self.exception_handler.handle_exception(e, context)
            return previous.retained("retained")

        elapsed = time.perf_counter() - begin
        result.planning_ms = record.duration_ms
        result.frontend_rerun = rerun
        result.budget_ratio = elapsed / remaining if remaining > 0 else math.inf
        over_budget = budget is not None and elapsed > budget
        if over_budget or not result.report.feasible:
            reason = "budget exceeded" if over_budget else f"violation {result.report.max_violation:.2e}"
            self.exception_handler.handle_exception(
                OptimizationError("Replan rejected, keeping previous trajectory", reason), context)
            kept = previous.retained("retained")
            kept.budget_ratio = result.budget_ratio
            if self.op_logger is not None:
                self.op_logger.log_operation("planner.replan", "retained", record.duration_ms, reason=reason)
            return kept

        result.status = "replanned"
        if self.op_logger is not None:
            self.op_logger.log_operation("planner.replan", "success", record.duration_ms,
                                         frontend_rerun=rerun, budget_ratio=result.budget_ratio)
        return result
