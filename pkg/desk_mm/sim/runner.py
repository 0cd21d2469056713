"""
Desk Mobile Manipulation Toolkit - Scenario Runner
計画・再計画・制御・姿勢オラクル・シミュレータの閉ループ実行
"""

import csv
import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..backend.planner import PlanResult, TrajectoryPlanner
from ..backend.problem import HeldObject
from ..control.controller import CascadedController, ControlCommand
from ..control.reference import ReferenceTrajectory
from ..core.settings import ToolkitSettings
from ..error_handling.exception_handler import ExceptionHandler, create_error_context
from ..exceptions import DeskMMException, ScenarioError
from ..frontend.tasks import TaskSpec
from ..geometry.se3 import RigidPose
from ..logging.structured_logger import StructuredLogger
from ..performance.cache_manager import IrmCache
from ..performance.profiler import PerformanceProfiler
from ..reachability.irm import InverseReachabilityMap, build_irm
from ..robot.description import RobotDescription
from ..robot.kinematics import fk_frame
from .metrics import IdealTimeEstimator, MissionResult, judge_mission, operation_time, ssct
from .oracle import PoseOracle
from .scenario import Scenario
from .simulator import KinematicSimulator, VelocityCommand

logger = logging.getLogger(__name__)

TERMINATIONS = ("completed", "collision", "gripper_cycles", "stuck", "timeout", "aborted")


@dataclass
class ReplanRecord:
    """再計画1回分の記録"""

    t: float
    status: str
    tasks: List[str]
    planning_ms: float
    budget_ratio: Optional[float]
    frontend_rerun: bool
    effective_at: float

    def to_dict(self) -> Dict[str, Any]:
        return {"t": self.t, "status": self.status, "tasks": self.tasks, "planning_ms": self.planning_ms,
                "budget_ratio": self.budget_ratio, "frontend_rerun": self.frontend_rerun,
                "effective_at": self.effective_at}


@dataclass
class GraspRecord:
    """グリッパ閉時点の手先誤差 (真の把持姿勢に対して)"""

    t: float
    task: str
    success: bool
    position_error: float
    orientation_error: float


@dataclass
class EsiWindow:
    """実行時の接近・退避窓と接近半直線 (推定姿勢基準)"""

    task: str
    phase: str
    start: float
    end: float
    origin: List[float]
    direction: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class HeldRecord:
    """把持した物体の衝突球 (物体座標系) と接触目標 [x, y, z, D(p_t)]"""

    spheres: List[List[float]]
    targets: List[List[List[float]]]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RunResult:
    """シナリオ実行結果"""

    scenario: str
    seed: int
    d_sigma: float
    termination: str
    missions: List[MissionResult]
    ssct: float
    operation_time: float
    duration: float
    trace: List[Dict[str, Any]] = field(default_factory=list)
    gripper_events: List[Dict[str, Any]] = field(default_factory=list)
    grasps: List[GraspRecord] = field(default_factory=list)
    replans: List[ReplanRecord] = field(default_factory=list)
    plan_errors: List[Dict[str, Any]] = field(default_factory=list)
    visibility: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)
    error_stats: Dict[str, Any] = field(default_factory=dict)
    ablations: Dict[str, bool] = field(default_factory=dict)
    esi_windows: List[EsiWindow] = field(default_factory=list)
    held_objects: Dict[str, HeldRecord] = field(default_factory=dict)
    diagnostics: Optional[Dict[str, Any]] = None

    @property
    def success_count(self) -> int:
        return sum(1 for m in self.missions if m.success)

    @property
    def min_budget_ratio(self) -> Optional[float]:
        """再計画の (置き換えた軌道の残り時間 / 計算時間) の最小値"""
        ratios = [1.0 / r.budget_ratio for r in self.replans
                  if r.budget_ratio is not None and r.budget_ratio > 0.0]
        return min(ratios) if ratios else None

    def summary(self) -> Dict[str, Any]:
        """トレースを除いた結果"""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "d_sigma": self.d_sigma,
            "termination": self.termination,
            "missions": [m.to_dict() for m in self.missions],
            "ssct": self.ssct,
            "operation_time": self.operation_time,
            "duration": self.duration,
            "gripper_events": self.gripper_events,
            "grasps": [vars(g) for g in self.grasps],
            "replans": [r.to_dict() for r in self.replans],
            "min_budget_ratio": self.min_budget_ratio,
            "plan_errors": self.plan_errors,
            "visibility": self.visibility,
            "error_stats": self.error_stats,
            "ablations": self.ablations,
            "esi_windows": [w.to_dict() for w in self.esi_windows],
            "held_objects": {k: v.to_dict() for k, v in self.held_objects.items()},
            "diagnostics": self.diagnostics,
        }

    def save(self, out_dir: Union[str, Path]) -> Path:
        """summary.json と trace.jsonl を書き出す"""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "summary.json", "w", encoding="utf-8") as f:
            json.dump(self.summary(), f, indent=2, ensure_ascii=False, default=str)
        save_trace(self.trace, out_dir / "trace.jsonl")
        logger.info(f"Run result saved: {out_dir}")
        return out_dir


# ---- トレース入出力 ----

def save_trace(rows: Sequence[Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return path


def load_trace(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """
    JSON-lines のトレースを読む

    Raises:
        ScenarioError: ファイルが無い、または行が壊れている場合
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError("Trace file not found", str(path))
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ScenarioError(f"Invalid trace line {lineno}", str(e))
    return rows


def export_trace_csv(rows: Sequence[Dict[str, Any]], path: Union[str, Path]) -> Path:
    """
    プロット用の列形式CSV

    列: t, x, y, psi, q0..q(L-1), ee_x..ee_qw, v, omega, sigma_s
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joints = len(rows[0]["q"]) if rows else 0
    header = (["t", "x", "y", "psi"] + [f"q{i}" for i in range(joints)]
              + ["ee_x", "ee_y", "ee_z", "ee_qx", "ee_qy", "ee_qz", "ee_qw", "v", "omega", "sigma_s"])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row["t"], row["x"], row["y"], row["psi"], *row["q"], *row["ee"],
                             row["v"], row["omega"], row["sigma_s"]])
    logger.info(f"Trace exported: {path} ({len(rows)} rows)")
    return path


# ---- 補助 ----

def load_or_build_irm(desc: RobotDescription, settings: ToolkitSettings, workers: int = 1) -> InverseReachabilityMap:
    """キャッシュディレクトリが設定されていればキャッシュ経由で構築"""
    if settings.irm.cache_dir:
        cache = IrmCache(settings.irm.cache_dir)
        return cache.get_or_build(desc, settings.irm, lambda: build_irm(desc, settings.irm, workers))
    return build_irm(desc, settings.irm, workers)


def planned_pose_errors(desc: RobotDescription, plan: PlanResult,
                        estimates: Dict[str, RigidPose]) -> List[Dict[str, Any]]:
    """計画軌道上の操作開始時点の手先と最新推定から求めた目標の差"""
    reference = ReferenceTrajectory(desc, plan.trajectory, plan.time_origin)
    out = []
    for planned in plan.planned:
        target = planned.ee_pose_at(0.0, estimates.get(planned.name))
        pos, rot = reference.ee_pose(planned.t_start).distance_to(target)
        out.append({"t": plan.time_origin, "task": planned.name, "position_error": pos,
                    "orientation_error": rot})
    return out


def ablation_switches(settings: ToolkitSettings) -> Dict[str, bool]:
    o = settings.optimizer
    return {"tap": o.enable_tap, "cmz": o.enable_cmz, "esi": o.enable_esi, "ecs": o.enable_ecs,
            "warping": settings.controller.enable_warping}


class ScenarioRunner:
    """
    閉ループ実行

    仮想時刻で 50 Hz の制御周期を回し、再計画は先行タスク完了の replan_delay 秒後から
    replan_period 秒ごとに行う。再計画の計算時間 (実時間) は real_time_factor を掛けて
    仮想時刻に加算した時点で制御器に渡す。
    """

    def __init__(self, scenario: Scenario, settings: Optional[ToolkitSettings] = None, seed: int = 0,
                 irm: Optional[InverseReachabilityMap] = None, log_dir: Optional[Union[str, Path]] = None,
                 workers: int = 1, record_trace: bool = True):
        """
        初期化

        Args:
            scenario: 実行するシナリオ
            settings: ツールキット設定
            seed: 乱数種 (オラクルのノイズ・指令ノイズ)
            irm: 構築済みの逆到達可能性マップ (None なら構築)
            log_dir: コマンドログ・操作ログの出力先
            workers: フロントエンド・IRM構築の並列数
            record_trace: 周期ごとのトレースを保持するか
        """
        self.scenario = scenario
        self.settings = settings or ToolkitSettings()
        self.seed = seed
        self.desc = scenario.desc
        self.record_trace = record_trace
        self.profiler = PerformanceProfiler()
        self.exception_handler = ExceptionHandler()
        log_file = Path(log_dir) / "operations.jsonl" if log_dir else None
        self.op_logger = StructuredLogger("desk_mm.sim", log_file=log_file)

        self.world = scenario.build_world(self.settings.world)
        self.irm = irm if irm is not None else load_or_build_irm(self.desc, self.settings, workers)
        self.planner = TrajectoryPlanner(self.desc, self.irm, self.settings, workers, self.profiler,
                                         self.op_logger, self.exception_handler)
        self.controller = CascadedController(self.desc, self.settings.controller, self.op_logger,
                                             self.profiler, self.exception_handler)
        self.oracle = PoseOracle({t.name: scenario.true_poses[t.name] for t in scenario.tasks if t.perception},
                                 scenario.oracle, self.settings.optimizer, self.world, seed)
        objects = {t.name: scenario.true_poses[t.name] for t in scenario.tasks if t.kind in ("pick", "operate")}
        self.sim = KinematicSimulator(self.desc, scenario.initial_state, objects, self.world,
                                      scenario.obstacles, self.settings.sim, seed + 1)

        self.tasks = scenario.tasks
        self.cursor = 0
        self.fired: Dict[str, int] = {}
        self.estimates: Dict[str, RigidPose] = {}
        self.held: Optional[Tuple[int, RigidPose]] = None
        self.plan: Optional[PlanResult] = None
        self._pending: Optional[Tuple[float, PlanResult]] = None

        self.trace: List[Dict[str, Any]] = []
        self.events: List[Dict[str, Any]] = []
        self.grasps: List[GraspRecord] = []
        self.replans: List[ReplanRecord] = []
        self.plan_errors: List[Dict[str, Any]] = []
        self.release_times: Dict[int, float] = {}
        self.release_poses: Dict[int, RigidPose] = {}
        self.grasp_ok: Dict[int, bool] = {}
        self.esi_windows: List[EsiWindow] = []
        self.held_objects: Dict[str, HeldRecord] = {}
        self._plan_since = 0.0
        self.cycles = 0
        logger.info("ScenarioRunner initialized")

    # ---- タスク窓 ----
    def _object_of(self, index: int) -> Optional[str]:
        task = self.tasks[index]
        if task.kind in ("pick", "operate"):
            return task.name
        if task.couple_to is not None:
            return self.tasks[task.couple_to].name
        return self.sim.attached.name if self.sim.attached is not None else None

    def active_window(self) -> Tuple[List[TaskSpec], Optional[HeldObject]]:
        """
        先頭から N_T 個のタスク (最新推定・把持の引き継ぎを反映)

        Returns:
            (局所タスク列, 保持中の物体)
        """
        stop = min(len(self.tasks), self.cursor + self.settings.sim.active_tasks)
        window: List[TaskSpec] = []
        for g in range(self.cursor, stop):
            task = self.tasks[g]
            if task.perception and task.name in self.estimates:
                task = task.with_pose(self.estimates[task.name])
            couple = task.couple_to
            window.append(replace(task, couple_to=couple - self.cursor
                                  if couple is not None and couple >= self.cursor else None))

        held = None
        if self.held is not None:
            pick, grasp = self.held
            local = next((k for k, g in enumerate(range(self.cursor, stop)) if self.tasks[g].couple_to == pick),
                         None)
            if local is None:
                local = next((k for k, t in enumerate(window) if t.kind in ("place", "drop")), None)
            if local is not None:
                window[local] = window[local].with_grasps([grasp])
                held = HeldObject(local, grasp, self.tasks[pick].object_spheres)
        return window, held

    # ---- 計画 ----
    def _accept(self, plan: PlanResult, t_effective: float) -> None:
        self.plan = plan
        self._plan_since = t_effective
        self.plan_errors.extend(planned_pose_errors(self.desc, plan, self.estimates))
        self.controller.set_plan(plan)
        logger.info(f"Plan accepted ({plan.status}) effective at t={t_effective:.2f}, "
                    f"tasks={[p.name for p in plan.planned]}")

    def plan_from_rest(self, t: float) -> PlanResult:
        """
        現在状態からの計画

        Raises:
            UnreachableTaskError, SearchFailure, ArmSearchFailure: フロントエンドの失敗
        """
        window, held = self.active_window()
        plan = self.planner.plan(self.sim.state, window, self.world, self.scenario.obstacles, held, time_origin=t)
        if plan.status == "infeasible":
            self.exception_handler.handle_exception(
                DeskMMException("Executing infeasible plan", f"max violation {plan.report.max_violation:.2e}"),
                create_error_context("sim", "plan", t))
        self._accept(plan, t)
        return plan

    def replan(self, t: float) -> ReplanRecord:
        """
        実行中の軌道を再計画

        制御周期は仮想時刻で進むため、再計画はその場で解き終えてから計算時間の
        real_time_factor 倍だけ遅らせて制御器に渡す。real_time_factor = 0 なら次の周期で切り替わる。
        """
        window, held = self.active_window()
        remaining = self.plan.t_end - t
        budget = max(min(self.settings.sim.replan_budget, remaining), 1e-3)
        begin = time.perf_counter()
        result = self.planner.replan(self.plan, window, t, self.world, self.scenario.obstacles, budget, held)
        elapsed = time.perf_counter() - begin
        effective = t + self.settings.sim.real_time_factor * elapsed
        if result.status == "replanned":
            self._pending = (effective, result)
        record = ReplanRecord(t, result.status, [task.name for task in window], result.planning_ms,
                              result.budget_ratio, result.frontend_rerun, effective)
        self.replans.append(record)
        return record

    def _apply_pending(self, t: float) -> None:
        if self._pending is not None and t >= self._pending[0]:
            effective, plan = self._pending
            self._pending = None
            self._accept(plan, effective)

    # ---- 安全性の記録 ----
    def _record_esi(self, task: TaskSpec, first: bool, last: bool) -> None:
        """実行中の計画のESI窓を、最新推定から求めた接近半直線とともに記録"""
        planned = self.plan.task(task.name) if self.plan is not None else None
        if planned is None:
            return
        estimate = self.estimates.get(task.name)
        spans = []
        if first and task.kind in ("pick", "operate") and planned.pre_window > 0.0:
            spans.append(("pre", planned.t_start - planned.pre_window, planned.t_start, 0.0))
        if last and task.kind in ("place", "drop", "operate") and planned.post_window > 0.0:
            spans.append(("post", planned.t_end, planned.t_end + planned.post_window, task.duration))
        for phase, start, end, tau in spans:
            pose = planned.ee_pose_at(tau, estimate)
            start = max(start, self._plan_since)
            if end > start:
                self.esi_windows.append(EsiWindow(task.name, phase, start, end, [float(v) for v in pose.translation],
                                                  [float(v) for v in -pose.z_axis]))

    def _record_held(self, index: int, name: str) -> None:
        """把持物体の衝突球と接触目標 (把持前の位置と解放先)"""
        spheres = self.tasks[index].object_spheres
        if not spheres or self.world is None:
            return
        poses = [self.sim.objects[name]]
        later = range(index + 1, len(self.tasks))
        release = next((g for g in later if self.tasks[g].couple_to == index), None)
        if release is None:
            release = next((g for g in later if self.tasks[g].kind in ("place", "drop")), None)
        if release is not None:
            target = self.tasks[release]
            poses.append(target.object_pose_at(0.0, self.estimates.get(target.name)))
        targets = []
        for local, _ in spheres:
            points = [pose.transform_point(local) for pose in poses]
            targets.append([[float(v) for v in p] + [float(self.world.value(p))] for p in points])
        self.held_objects[name] = HeldRecord([[float(v) for v in local] + [float(r)] for local, r in spheres],
                                             targets)

    # ---- グリッパ ----
    def _handle_gripper(self, command: ControlCommand, t: float) -> None:
        for event in command.gripper_events:
            index = next(i for i, task in enumerate(self.tasks) if task.name == event.task)
            task = self.tasks[index]
            first = self.fired.get(task.name, 0) == 0
            if first:
                self.oracle.mark_manipulation(task.name)
            self.fired[task.name] = self.fired.get(task.name, 0) + 1
            self._record_esi(task, first, self.fired[task.name] == len(task.gripper))
            self.events.append({"t": t, "task": task.name, "index": event.index, "closed": event.closed})
            if event.closed:
                name = self._object_of(index)
                planned = self.plan.task(task.name)
                if name is None or planned is None or name not in self.sim.objects:
                    continue
                ok, pos_err, rot_err = self.sim.grasp(name, planned.grasp_pose)
                self.grasps.append(GraspRecord(t, task.name, ok, pos_err, rot_err))
                self.grasp_ok[index] = ok
                if ok:
                    self.held = (index, planned.grasp_pose)
                    self._record_held(index, name)
            else:
                self.cycles += 1
                drop_height = None
                if task.kind == "drop":
                    region = task.place_region
                    drop_height = (region.center[2] if region is not None
                                   else task.object_pose_at(task.duration).translation[2])
                released = self.sim.release(drop_height)
                self.release_times[index] = t
                if released is not None:
                    name, pose = released
                    self.release_poses[index] = pose
                    if name in self.oracle.true_poses:
                        self.oracle.set_true_pose(name, pose)
                self.held = None

    def _advance(self, t: float) -> bool:
        """完了したタスクの分だけ先頭を進める"""
        moved = False
        while self.cursor < len(self.tasks):
            task = self.tasks[self.cursor]
            if self.fired.get(task.name, 0) < len(task.gripper):
                break
            self.cursor += 1
            moved = True
            logger.info(f"Task {task.name} completed at t={t:.2f}")
        return moved

    # ---- 周期 ----
    def _observe(self, t: float) -> None:
        camera = self.sim.camera_pose()
        for g in range(self.cursor, len(self.tasks)):
            task = self.tasks[g]
            if not task.perception or self.fired.get(task.name, 0) > 0:
                continue
            estimate = self.oracle.observe(task.name, camera, t)
            if estimate is not None and self.estimates.get(task.name) is not estimate:
                self.estimates[task.name] = estimate
                self.controller.update_estimate(task.name, estimate)

    def _record(self, t: float, command: ControlCommand) -> None:
        state = self.sim.state
        ee = fk_frame(self.desc, state, "ee")
        held = self.sim.attached.name if self.sim.attached else None
        held_pose = None
        if held is not None:
            pose = self.sim.objects[held]
            held_pose = [float(v) for v in pose.translation] + [float(v) for v in pose.rotation]
        self.trace.append({
            "t": t, "x": float(state.base[0]), "y": float(state.base[1]), "psi": float(state.base[2]),
            "q": [float(q) for q in state.arm],
            "ee": [float(v) for v in ee.translation] + [float(v) for v in ee.rotation],
            "v": command.v, "omega": command.omega, "sigma_s": command.sigma_s, "fallback": command.fallback,
            "solve_ms": command.solve_ms, "held": held, "held_pose": held_pose,
        })

    def run(self) -> RunResult:
        """
        シナリオを最後まで実行

        終了条件: 全タスク完了、衝突、グリッパ開閉回数の超過、ベースの停滞、最大時間。
        フロントエンドの失敗で計画が得られない場合は診断情報付きで中断する。
        """
        sim_settings = self.settings.sim
        dt = 1.0 / sim_settings.control_rate
        steps = int(math.ceil(sim_settings.max_duration * sim_settings.control_rate))
        history: Deque[Tuple[float, np.ndarray]] = deque()
        termination = "timeout"
        diagnostics = None
        t = 0.0
        rest_retry = 0.0

        try:
            self._observe(t)
            self.plan_from_rest(t)
            next_replan = sim_settings.replan_delay
            for step in range(steps + 1):
                t = step * dt
                self._apply_pending(t)
                self._observe(t)

                if self.cursor < len(self.tasks) and self.plan is not None:
                    if t > self.plan.t_end and self._pending is None:
                        if t >= rest_retry:
                            self.plan_from_rest(t)
                            next_replan = rest_retry = t + sim_settings.replan_period
                    elif t >= next_replan:
                        self.replan(t)
                        next_replan = t + sim_settings.replan_period

                command = self.controller.control_cycle(self.sim.state, t, self.scenario.obstacles)
                self._handle_gripper(command, t)
                if self.record_trace:
                    self._record(t, command)
                if self._advance(t):
                    next_replan = t + sim_settings.replan_delay

                if self.cursor >= len(self.tasks):
                    termination = "completed"
                    break
                if self.cycles >= sim_settings.max_gripper_cycles:
                    termination = "gripper_cycles"
                    break
                self.sim.step(VelocityCommand(command.v, command.omega, command.arm_velocity), dt)
                collision = self.sim.collision()
                if collision is not None:
                    logger.warning(f"Collision at t={t:.2f}: {collision}")
                    termination = "collision"
                    diagnostics = {"collision": collision}
                    break

                history.append((t + dt, self.sim.state.xy.copy()))
                while len(history) > 1 and history[1][0] <= t + dt - sim_settings.stuck_window:
                    history.popleft()
                if (t + dt - history[0][0] >= sim_settings.stuck_window - 1e-9
                        and float(np.linalg.norm(history[-1][1] - history[0][1])) < sim_settings.stuck_distance):
                    logger.warning(f"Base stuck at t={t:.2f}")
                    termination = "stuck"
                    break
        except DeskMMException as e:
            self.exception_handler.handle_exception(e, create_error_context("sim", "run", t))
            logger.error(f"Scenario aborted at t={t:.2f}: {e}")
            termination = "aborted"
            diagnostics = e.to_dict()

        missions = self.judge(t)
        result = RunResult(
            scenario=self.scenario.name, seed=self.seed, d_sigma=self.scenario.d_sigma, termination=termination,
            missions=missions, ssct=ssct(missions), operation_time=operation_time(missions), duration=t,
            trace=self.trace, gripper_events=self.events, grasps=self.grasps, replans=self.replans,
            plan_errors=self.plan_errors, visibility={k: v.to_dict() for k, v in self.oracle.log.items()},
            error_stats=self.exception_handler.get_error_statistics(), ablations=ablation_switches(self.settings),
            esi_windows=self.esi_windows, held_objects=self.held_objects, diagnostics=diagnostics)
        self.op_logger.log_operation("sim.run", termination, t * 1000.0, ssct=result.ssct,
                                     operation_time=result.operation_time)
        self.op_logger.close()
        logger.info(f"Scenario {self.scenario.name} finished ({termination}): SSCT={result.ssct:.3f}, "
                    f"operation time={result.operation_time:.2f} s")
        return result

    def judge(self, t_final: float) -> List[MissionResult]:
        """各ミッションの判定"""
        reach = self.desc.max_reach
        estimator = IdealTimeEstimator(self.world, self.desc.base.footprint_radius, reach, self.settings.sim)
        position = self.scenario.initial_state.xy
        start_time: Optional[float] = 0.0
        results = []
        for m, indices in enumerate(self.scenario.missions):
            targets = [self.scenario.true_poses[self.tasks[i].name].translation for i in indices]
            ideal, position = estimator.mission_time(position, targets)
            last = indices[-1]
            release = self.release_times.get(last)
            picks = [i for i in indices if self.tasks[i].kind in ("pick", "operate")]
            grasped = all(self.grasp_ok.get(i, False) for i in picks)
            results.append(judge_mission(m, [self.tasks[i] for i in indices], start_time, release, grasped,
                                         self.release_poses.get(last), ideal, self.settings.sim))
            start_time = release
        return results


def run_scenario(scenario: Scenario, settings: Optional[ToolkitSettings] = None, seed: int = 0,
                 irm: Optional[InverseReachabilityMap] = None, log_dir: Optional[Union[str, Path]] = None,
                 workers: int = 1, record_trace: bool = True) -> RunResult:
    """
    シナリオの閉ループ実行

    同じシナリオ・設定・乱数種 (real_time_factor = 0) なら結果は同一。

    Returns:
        RunResult (ミッション結果, SSCT, 作業時間, トレース)
    """
    runner = ScenarioRunner(scenario, settings, seed, irm, log_dir, workers, record_trace)
    return runner.run()
