"""
Desk Mobile Manipulation Toolkit - Cascaded Controller
ベースMPC → マニピュレータMPC の制御周期とグリッパ指令
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..backend.planner import PlanResult
from ..core.settings import ControllerSettings
from ..error_handling.exception_handler import ExceptionHandler, create_error_context
from ..exceptions import ControlError
from ..geometry.se3 import RigidPose, f_d_rot
from ..logging.structured_logger import StructuredLogger
from ..performance.profiler import PerformanceProfiler
from ..robot.description import RobotDescription
from ..robot.kinematics import fk_frame
from ..robot.state import WholeBodyState
from ..world.obstacles import DynamicObstacle
from .mpc import (ArmHorizon, BaseHorizon, ControllerConfig, ExtendedState, MpcResult, arm_mpc_step,
                  base_mpc_step)
from .reference import ReferenceTrajectory
from .switching import switch_weights
from .warping import WarpSchedule, warped_or_nominal

logger = logging.getLogger(__name__)


@dataclass
class GripperEvent:
    """グリッパ切替"""

    t: float
    task: str
    index: int
    closed: bool


@dataclass
class ControlCommand:
    """1周期の出力 (速度指令 + グリッパ指令)"""

    t: float
    v: float
    omega: float
    arm_velocity: np.ndarray
    sigma_s: float
    fallback: str = "none"
    solve_ms: float = 0.0
    gripper_events: List[GripperEvent] = field(default_factory=list)
    tracking_errors: Dict[str, float] = field(default_factory=dict)

    @property
    def gripper(self) -> Optional[bool]:
        """この周期で出た最後のグリッパ指令 (無ければ None)"""
        return self.gripper_events[-1].closed if self.gripper_events else None

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {
            "t": self.t, "v": self.v, "omega": self.omega,
            "arm_velocity": [float(x) for x in self.arm_velocity],
            "gripper": self.gripper, "fallback": self.fallback,
        }


class CascadedController:
    """
    カスケードMPC

    計画の差し替えは set_plan で予約し、次の周期の先頭で反映する。
    周期は同時に1つしか実行しない (ウォームスタートを内部に持つ)。
    """

    def __init__(self, desc: RobotDescription, settings: Optional[ControllerSettings] = None,
                 op_logger: Optional[StructuredLogger] = None,
                 profiler: Optional[PerformanceProfiler] = None,
                 exception_handler: Optional[ExceptionHandler] = None):
        """
        初期化

        Args:
            desc: ロボット記述
            settings: 制御設定
            op_logger: コマンドログの出力先
            profiler: 計測器
            exception_handler: フォールバックの記録先
        """
        self.desc = desc
        self.settings = settings or ControllerSettings()
        self.config = ControllerConfig.from_settings(self.settings, desc)
        self.op_logger = op_logger
        self.profiler = profiler or PerformanceProfiler()
        self.exception_handler = exception_handler or ExceptionHandler()

        self.plan: Optional[PlanResult] = None
        self.reference: Optional[ReferenceTrajectory] = None
        self.schedule: Optional[WarpSchedule] = None
        self.estimates: Dict[str, RigidPose] = {}
        self._pending: Optional[Tuple[PlanResult, ReferenceTrajectory, WarpSchedule]] = None
        self._lock = threading.Lock()

        self._base_warm: Optional[np.ndarray] = None
        self._arm_warm: Optional[np.ndarray] = None
        self._velocity = np.zeros(2)
        self._arm_velocity = np.zeros(desc.joint_count)
        self._last_t: Optional[float] = None
        self._fired: Set[Tuple[str, int]] = set()
        logger.info("CascadedController initialized")

    # ---- 計画・推定の受け渡し ----
    def set_plan(self, plan: PlanResult) -> None:
        """
        新しい計画を予約 (次の周期で反映)

        Raises:
            WarpScheduleError: ワーピング窓が重なる場合
        """
        reference = ReferenceTrajectory(self.desc, plan.trajectory, plan.time_origin)
        schedule = WarpSchedule.from_plan(plan, reference, self.settings.switch_duration, self.estimates)
        with self._lock:
            self._pending = (plan, reference, schedule)
        logger.debug(f"Plan queued: {plan.status}, t=[{plan.time_origin:.2f}, {plan.t_end:.2f}]")

    def update_estimate(self, name: str, pose: RigidPose) -> None:
        """物体姿勢の最新推定"""
        with self._lock:
            self.estimates[name] = pose
            if self.schedule is not None:
                self.schedule.update_estimate(name, pose)
            if self._pending is not None:
                self._pending[2].update_estimate(name, pose)

    def mark_fired(self, name: str, index: int) -> None:
        self._fired.add((name, index))

    def _swap(self) -> None:
        with self._lock:
            if self._pending is not None:
                self.plan, self.reference, self.schedule = self._pending
                self._pending = None

    @property
    def velocity_state(self) -> Tuple[float, float, np.ndarray]:
        return float(self._velocity[0]), float(self._velocity[1]), self._arm_velocity.copy()

    def extended_state(self, plant: WholeBodyState) -> ExtendedState:
        """計測姿勢 + 直前の速度指令"""
        return ExtendedState(np.concatenate([plant.base, self._velocity]), plant.arm, self._arm_velocity)

    # ---- 参照 ----
    def horizons(self, t: float) -> Tuple[BaseHorizon, ArmHorizon]:
        """時刻 t から N 段分の参照"""
        N, dt = self.config.horizon, self.config.dt
        times = t + dt * np.arange(N + 1)
        samples = [self.reference.sample(tk) for tk in times]
        base = BaseHorizon(np.array([s.base for s in samples]),
                           np.array([s.base_input for s in samples[:N]]), times)
        sigma_s = np.ones(N + 1)
        if self.settings.enable_warping and self.schedule is not None:
            sigma_s = np.array([switch_weights(self.schedule, tk)[0] for tk in times])
        sigma_ee = 1.0 - sigma_s
        targets = [warped_or_nominal(self.reference, self.schedule, tk, self.settings.enable_warping)
                   if sigma_ee[k] > 1e-9 else None for k, tk in enumerate(times)]
        arm = ArmHorizon(np.array([s.arm for s in samples]), np.array([s.arm_velocity for s in samples]),
                         np.array([s.arm_acceleration for s in samples[:N]]), sigma_s, sigma_ee,
                         targets, times)
        return base, arm

    def _gripper_events(self, t: float) -> List[GripperEvent]:
        events: List[GripperEvent] = []
        previous = self._last_t if self._last_t is not None else -np.inf
        for planned in self.plan.planned:
            for idx, switch in enumerate(planned.task.gripper):
                key = (planned.name, idx)
                t_switch = planned.t_start + switch.tau
                if key not in self._fired and previous < t_switch <= t:
                    self._fired.add(key)
                    events.append(GripperEvent(t_switch, planned.name, idx, switch.closed))
        events.sort(key=lambda e: e.t)
        return events

    def _tracking_errors(self, plant: WholeBodyState, t: float, reference_base: np.ndarray) -> Dict[str, float]:
        target = warped_or_nominal(self.reference, self.schedule, t, self.settings.enable_warping)
        ee = fk_frame(self.desc, plant, "ee")
        return {
            "base_position": float(np.linalg.norm(plant.xy - reference_base[:2])),
            "ee_position": float(np.linalg.norm(ee.translation - target.translation)),
            "ee_rotation": f_d_rot(ee.rotation_matrix, target.rotation_matrix),
        }

    def _report_fallback(self, which: str, t: float, result: MpcResult) -> None:
        error = ControlError(f"{which} MPC fallback engaged", f"cost={result.cost:.3g}, nit={result.iterations}")
        self.exception_handler.handle_exception(
            error, create_error_context("control", f"control.{which}_mpc", t))

    # ---- 制御周期 ----
    def control_cycle(self, plant: WholeBodyState, t: float,
                      obstacles: Sequence[DynamicObstacle] = ()) -> ControlCommand:
        """
        1制御周期

        ベースMPCの予測をマニピュレータMPCに渡し、得た加速度を Δt 積分して速度指令にする。
        両方がフォールバックした場合は直前の速度指令を減衰させて保持する。

        Args:
            plant: 計測した全身状態
            t: 絶対時刻 (s)
            obstacles: 動的障害物

        Returns:
            ControlCommand

        Raises:
            ControlError: 計画が一度も設定されていない場合
        """
        self._swap()
        if self.plan is None:
            raise ControlError("No trajectory to track", f"t={t:.3f}")
        obstacles = list(obstacles)

        with self.profiler.profile("control.cycle") as record:
            measured = self.extended_state(plant)
            base_ref, arm_ref = self.horizons(t)
            base = base_mpc_step(measured.base, base_ref, obstacles, self.config, self._base_warm)
            arm = arm_mpc_step(measured.arm_q, measured.arm_qd, base.states, arm_ref, obstacles,
                               self.desc, self.config, self._arm_warm)
            self._base_warm = None if base.fallback else base.inputs
            self._arm_warm = None if arm.fallback else arm.inputs

            dt = self.config.dt
            if base.fallback and arm.fallback:
                fallback = "hold"
                velocity = self.config.hold_decay * self._velocity
                arm_velocity = self.config.hold_decay * self._arm_velocity
            else:
                fallback = "base" if base.fallback else ("arm" if arm.fallback else "none")
                velocity = measured.base[3:] + dt * base.command
                arm_velocity = measured.arm_qd + dt * arm.command
            velocity = np.clip(velocity, -self.config.base_state_max, self.config.base_state_max)
            arm_velocity = np.clip(arm_velocity, -self.config.qd_max, self.config.qd_max)

        if base.fallback:
            self._report_fallback("base", t, base)
        if arm.fallback:
            self._report_fallback("arm", t, arm)
        if fallback == "hold":
            logger.warning(f"Both MPC fallbacks engaged at t={t:.2f}; holding decayed velocity")

        self._velocity = velocity
        self._arm_velocity = arm_velocity
        events = self._gripper_events(t)
        self._last_t = t
        command = ControlCommand(t, float(velocity[0]), float(velocity[1]), arm_velocity.copy(),
                                 float(arm_ref.sigma_s[0]), fallback, record.duration_ms, events,
                                 self._tracking_errors(plant, t, base_ref.states[0]))
        for event in events:
            logger.info(f"Gripper {'close' if event.closed else 'open'}: {event.task} at t={event.t:.2f}")
        if self.op_logger is not None:
            self.op_logger.log_cycle(t, command.to_dict(), command.sigma_s, command.tracking_errors,
                                     command.solve_ms, fallback=fallback)
        return command

    def reset(self) -> None:
        """ウォームスタートと速度状態を初期化"""
        self._base_warm = None
        self._arm_warm = None
        self._velocity = np.zeros(2)
        self._arm_velocity = np.zeros(self.desc.joint_count)
        self._last_t = None
