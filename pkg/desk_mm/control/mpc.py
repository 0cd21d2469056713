"""
Desk Mobile Manipulation Toolkit - Cascaded MPC
ベースとマニピュレータの逐次受動ホライズン制御 (単一シューティング)
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..core.settings import ControllerSettings
from ..exceptions import ParameterError
from ..geometry.se3 import RigidPose, trace_gradient
from ..robot.description import RobotDescription
from ..robot.kinematics import compute_chain, frame_matrix, point_jacobians, sphere_world_centers
from ..robot.state import WholeBodyState
from ..world.obstacles import DynamicObstacle, predict_obstacle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControllerConfig:
    """
    MPC設定 (重みは対角成分)

    状態上下限はペナルティ、入力上下限は L-BFGS-B の箱制約で扱う。
    """

    horizon: int
    dt: float
    q_base: np.ndarray
    q_base_terminal: np.ndarray
    r_base: np.ndarray
    q_arm: np.ndarray
    q_arm_velocity: np.ndarray
    r_arm: np.ndarray
    q_task_position: float
    weight_rotation: float
    weight_obstacle: float
    obstacle_margin: float
    state_penalty: float
    base_state_max: np.ndarray  # (v, ω)
    base_input_max: np.ndarray  # (a, α)
    q_min: np.ndarray
    q_max: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray
    footprint_radius: float
    max_iterations: int = 30
    hold_decay: float = 0.5

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError("Horizon must be at least 1", f"N={self.horizon}")
        if not self.dt > 0.0:
            raise ParameterError("Controller step must be positive", f"dt={self.dt}")
        for name in ("q_base", "q_base_terminal", "r_base", "q_arm", "q_arm_velocity", "r_arm"):
            if np.any(np.asarray(getattr(self, name)) < 0.0):
                raise ParameterError("Controller weights must be positive semidefinite", name)

    @classmethod
    def from_settings(cls, settings: ControllerSettings, desc: RobotDescription) -> "ControllerConfig":
        """設定とロボットの限界値から作る"""
        L = desc.joint_count
        return cls(
            horizon=settings.horizon, dt=settings.dt,
            q_base=np.asarray(settings.q_base, dtype=float),
            q_base_terminal=np.asarray(settings.q_base_terminal, dtype=float),
            r_base=np.asarray(settings.r_base, dtype=float),
            q_arm=np.full(L, settings.q_arm), q_arm_velocity=np.full(L, settings.q_arm_velocity),
            r_arm=np.full(L, settings.r_arm),
            q_task_position=settings.q_task_position, weight_rotation=settings.weight_rotation,
            weight_obstacle=settings.weight_obstacle, obstacle_margin=settings.obstacle_margin,
            state_penalty=settings.state_penalty,
            base_state_max=np.array([min(settings.v_max, desc.base.max_speed), settings.w_max]),
            base_input_max=np.array([settings.a_max, settings.alpha_max]),
            q_min=desc.q_min, q_max=desc.q_max, qd_max=desc.omega_max, qdd_max=desc.alpha_max,
            footprint_radius=desc.base.footprint_radius,
            max_iterations=settings.max_iterations, hold_decay=settings.hold_decay)


@dataclass
class ExtendedState:
    """拡張状態 base = (q_x, q_y, ψ, v_b, ω_b), arm = (q_m, q̇_m)"""

    base: np.ndarray
    arm_q: np.ndarray
    arm_qd: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float).reshape(5)
        self.arm_q = np.asarray(self.arm_q, dtype=float).reshape(-1)
        self.arm_qd = np.asarray(self.arm_qd, dtype=float).reshape(-1)
        if self.arm_q.shape != self.arm_qd.shape:
            raise ParameterError("Arm position and velocity dimensions differ",
                                 f"{self.arm_q.shape} vs {self.arm_qd.shape}")

    @property
    def arm(self) -> np.ndarray:
        return np.concatenate([self.arm_q, self.arm_qd])

    def whole_body(self) -> WholeBodyState:
        return WholeBodyState(self.base[:3], self.arm_q)


@dataclass
class BaseHorizon:
    """ベース参照 (states: (N+1)×5, inputs: N×2, times: N+1)"""

    states: np.ndarray
    inputs: np.ndarray
    times: np.ndarray


@dataclass
class ArmHorizon:
    """
    マニピュレータ参照

    q, qd: (N+1)×L, qdd: N×L, sigma_s/sigma_ee: N+1。
    targets[k] はワーピング済み手先目標 (σ_ee が 0 の段では None でよい)。
    """

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    sigma_s: np.ndarray
    sigma_ee: np.ndarray
    targets: List[Optional[RigidPose]]
    times: np.ndarray


@dataclass
class MpcResult:
    """1周期分の解"""

    command: np.ndarray
    inputs: np.ndarray
    states: np.ndarray
    cost: float
    iterations: int
    fallback: bool


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def _hinge_penalty(value: np.ndarray, limit: np.ndarray) -> Tuple[float, np.ndarray]:
    """Σ max(0, |value| − limit)² と勾配"""
    excess = np.abs(value) - limit
    active = excess > 0.0
    cost = float(np.sum(excess[active] ** 2))
    grad = np.where(active, 2.0 * excess * np.sign(value), 0.0)
    return cost, grad


def _shift(previous: Optional[np.ndarray], shape: Tuple[int, int]) -> np.ndarray:
    """前回解を1段ずらした初期値"""
    if previous is None or previous.shape != shape:
        return np.zeros(shape)
    shifted = np.empty(shape)
    shifted[:-1] = previous[1:]
    shifted[-1] = previous[-1]
    return shifted


def _solve(fun, x0: np.ndarray, bounds: Sequence[Tuple[float, float]],
           max_iterations: int) -> Tuple[np.ndarray, float, int, bool]:
    """
    L-BFGS-B で解き、改善が無ければ失敗を返す

    Returns:
        (解, コスト, 反復回数, 改善したか)
    """
    initial_cost, _ = fun(x0)
    result = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                      options={"maxiter": max_iterations})
    finite = np.all(np.isfinite(result.x)) and np.isfinite(result.fun)
    improved = finite and (result.success or result.fun < initial_cost)
    return result.x, float(result.fun), int(result.nit), bool(improved)


# ---------------------------------------------------------------- base

def rollout_base(x0: np.ndarray, inputs: np.ndarray, dt: float) -> np.ndarray:
    """一輪車 + 二重積分器のオイラー積分"""
    states = np.zeros((len(inputs) + 1, 5))
    states[0] = x0
    for k, (a, alpha) in enumerate(inputs):
        px, py, psi, v, w = states[k]
        states[k + 1] = (px + dt * v * math.cos(psi), py + dt * v * math.sin(psi),
                         psi + dt * w, v + dt * a, w + dt * alpha)
    return states


def _base_obstacle(p: np.ndarray, obstacles: Sequence[DynamicObstacle], t: float,
                   config: ControllerConfig) -> Tuple[float, np.ndarray]:
    cost = 0.0
    grad = np.zeros(2)
    for obstacle in obstacles:
        diff = p - predict_obstacle(obstacle, t)[:2]
        dist = float(np.linalg.norm(diff))
        gap = config.obstacle_margin - (dist - obstacle.radius - config.footprint_radius)
        if gap <= 0.0 or dist < 1e-12:
            continue
        cost += config.weight_obstacle * gap * gap
        grad += -2.0 * config.weight_obstacle * gap * diff / dist
    return cost, grad


def base_cost(inputs_flat: np.ndarray, x0: np.ndarray, reference: BaseHorizon,
              obstacles: Sequence[DynamicObstacle], config: ControllerConfig) -> Tuple[float, np.ndarray]:
    """ベースOCPの目的関数と随伴法による勾配"""
    N, dt = config.horizon, config.dt
    inputs = inputs_flat.reshape(N, 2)
    states = rollout_base(x0, inputs, dt)

    cost = 0.0
    g_x = np.zeros((N + 1, 5))
    for k in range(1, N + 1):
        Q = config.q_base_terminal if k == N else config.q_base
        err = states[k] - reference.states[k]
        err[2] = _wrap(err[2])
        cost += float(err @ (Q * err))
        g_x[k] += 2.0 * Q * err
        c_pen, g_pen = _hinge_penalty(states[k, 3:], config.base_state_max)
        cost += config.state_penalty * c_pen
        g_x[k, 3:] += config.state_penalty * g_pen
        if obstacles:
            c_obs, g_obs = _base_obstacle(states[k, :2], obstacles, float(reference.times[k]), config)
            cost += c_obs
            g_x[k, :2] += g_obs

    du = inputs - reference.inputs
    cost += float(np.sum(du * du * config.r_base))
    g_u = 2.0 * du * config.r_base

    lam = g_x[N].copy()
    for k in range(N - 1, -1, -1):
        g_u[k, 0] += dt * lam[3]
        g_u[k, 1] += dt * lam[4]
        _, _, psi, v, _ = states[k]
        prop = lam.copy()
        prop[2] += lam[0] * (-dt * v * math.sin(psi)) + lam[1] * (dt * v * math.cos(psi))
        prop[3] += lam[0] * dt * math.cos(psi) + lam[1] * dt * math.sin(psi)
        prop[4] += lam[2] * dt
        lam = g_x[k] + prop
    return cost, g_u.ravel()


def base_mpc_step(measured: np.ndarray, reference: BaseHorizon, obstacles: Sequence[DynamicObstacle],
                  config: ControllerConfig, warm_start: Optional[np.ndarray] = None) -> MpcResult:
    """
    ベースMPCの1ステップ

    Args:
        measured: 拡張ベース状態 (q_x, q_y, ψ, v_b, ω_b)
        reference: ホライズン分の参照
        obstacles: 動的障害物
        config: MPC設定
        warm_start: 前回の入力列 (N×2)

    Returns:
        MpcResult (command = (a_b, α_b))。改善が無ければ零加速度にフォールバック。
    """
    N = config.horizon
    x0 = np.asarray(measured, dtype=float)
    guess = _shift(warm_start, (N, 2)) if warm_start is not None else reference.inputs.copy()
    guess = np.clip(guess, -config.base_input_max, config.base_input_max)
    bounds = [(-m, m) for _ in range(N) for m in config.base_input_max]

    def fun(u):
        return base_cost(u, x0, reference, obstacles, config)

    u, cost, nit, improved = _solve(fun, guess.ravel(), bounds, config.max_iterations)
    if not improved:
        logger.warning("Base MPC did not improve; zero-acceleration fallback")
        zero = np.zeros((N, 2))
        return MpcResult(np.zeros(2), zero, rollout_base(x0, zero, config.dt),
                         fun(zero.ravel())[0], nit, True)
    inputs = u.reshape(N, 2)
    return MpcResult(inputs[0].copy(), inputs, rollout_base(x0, inputs, config.dt), cost, nit, False)


# ---------------------------------------------------------------- arm

def rollout_arm(q0: np.ndarray, qd0: np.ndarray, inputs: np.ndarray,
                dt: float) -> Tuple[np.ndarray, np.ndarray]:
    q = np.zeros((len(inputs) + 1, len(q0)))
    qd = np.zeros_like(q)
    q[0], qd[0] = q0, qd0
    for k, qdd in enumerate(inputs):
        q[k + 1] = q[k] + dt * qd[k]
        qd[k + 1] = qd[k] + dt * qdd
    return q, qd


def task_cost(desc: RobotDescription, base: Sequence[float], q: np.ndarray, target: RigidPose,
              config: ControllerConfig, chain=None) -> Tuple[float, np.ndarray]:
    """
    l_task = Q_p‖p_w − p_ee‖² − ω_R tr(R_eeᵀ R_w) と関節角勾配

    手先が目標に一致すると −3ω_R。
    """
    chain = chain if chain is not None else compute_chain(desc, base, q)
    T_ee = frame_matrix(desc, chain, "ee")
    p_ee, R_ee = T_ee[:3, 3], T_ee[:3, :3]
    err = target.translation - p_ee
    R_w = target.rotation_matrix
    cost = config.q_task_position * float(err @ err) - config.weight_rotation * float(np.trace(R_ee.T @ R_w))
    Jv, Jw = point_jacobians(chain, desc.joint_count, p_ee)
    grad = (-2.0 * config.q_task_position * (Jv[:, 3:].T @ err)
            - config.weight_rotation * (Jw[:, 3:].T @ trace_gradient(R_ee, R_w)))
    return cost, grad


def _arm_obstacle(desc: RobotDescription, chain, obstacles: Sequence[DynamicObstacle], t: float,
                  config: ControllerConfig) -> Tuple[float, np.ndarray]:
    cost = 0.0
    grad = np.zeros(desc.joint_count)
    centers = sphere_world_centers(desc, chain)
    for idx in range(desc.sphere_count):
        link = int(desc.sphere_links[idx])
        if link == 0:
            continue
        for obstacle in obstacles:
            diff = centers[idx, :2] - predict_obstacle(obstacle, t)[:2]
            dist = float(np.linalg.norm(diff))
            gap = config.obstacle_margin - (dist - obstacle.radius - float(desc.sphere_radii[idx]))
            if gap <= 0.0 or dist < 1e-12:
                continue
            cost += config.weight_obstacle * gap * gap
            Jv, _ = point_jacobians(chain, link, centers[idx])
            grad += -2.0 * config.weight_obstacle * gap * (Jv[:2, 3:].T @ (diff / dist))
    return cost, grad


def arm_cost(inputs_flat: np.ndarray, q0: np.ndarray, qd0: np.ndarray, base_states: np.ndarray,
             reference: ArmHorizon, obstacles: Sequence[DynamicObstacle], desc: RobotDescription,
             config: ControllerConfig) -> Tuple[float, np.ndarray]:
    """
    マニピュレータOCPの目的関数と勾配

    段コストは σ_s l_track + σ_ee l_task + l_m,dy。
    ベース姿勢はベースMPCの予測状態で固定する。
    """
    N, dt, L = config.horizon, config.dt, len(q0)
    inputs = inputs_flat.reshape(N, L)
    q, qd = rollout_arm(q0, qd0, inputs, dt)

    cost = 0.0
    g_q = np.zeros((N + 1, L))
    g_qd = np.zeros((N + 1, L))
    for k in range(1, N + 1):
        s_track, s_task = float(reference.sigma_s[k]), float(reference.sigma_ee[k])
        e_q = q[k] - reference.q[k]
        e_qd = qd[k] - reference.qd[k]
        cost += s_track * float(e_q @ (config.q_arm * e_q) + e_qd @ (config.q_arm_velocity * e_qd))
        g_q[k] += 2.0 * s_track * config.q_arm * e_q
        g_qd[k] += 2.0 * s_track * config.q_arm_velocity * e_qd

        c_pen, g_pen = _hinge_penalty(qd[k], config.qd_max)
        cost += config.state_penalty * c_pen
        g_qd[k] += config.state_penalty * g_pen
        mid = 0.5 * (config.q_min + config.q_max)
        half = 0.5 * (config.q_max - config.q_min)
        c_pen, g_pen = _hinge_penalty(q[k] - mid, half)
        cost += config.state_penalty * c_pen
        g_q[k] += config.state_penalty * g_pen

        target = reference.targets[k]
        need_task = s_task > 1e-9 and target is not None
        if need_task or obstacles:
            chain = compute_chain(desc, base_states[k, :3], q[k])
            if need_task:
                c_task, g_task = task_cost(desc, base_states[k, :3], q[k], target, config, chain)
                cost += s_task * c_task
                g_q[k] += s_task * g_task
            if obstacles:
                c_obs, g_obs = _arm_obstacle(desc, chain, obstacles, float(reference.times[k]), config)
                cost += c_obs
                g_q[k] += g_obs

    du = inputs - reference.qdd
    cost += float(np.sum(du * du * config.r_arm))
    g_u = 2.0 * du * config.r_arm

    lam_q, lam_qd = g_q[N].copy(), g_qd[N].copy()
    for k in range(N - 1, -1, -1):
        g_u[k] += dt * lam_qd
        lam_q, lam_qd = g_q[k] + lam_q, g_qd[k] + dt * lam_q + lam_qd
    return cost, g_u.ravel()


def arm_mpc_step(measured_q: np.ndarray, measured_qd: np.ndarray, base_states: np.ndarray,
                 reference: ArmHorizon, obstacles: Sequence[DynamicObstacle], desc: RobotDescription,
                 config: ControllerConfig, warm_start: Optional[np.ndarray] = None) -> MpcResult:
    """
    マニピュレータMPCの1ステップ

    Args:
        measured_q, measured_qd: 現在の関節角・角速度
        base_states: 同じ周期のベースMPC予測 ((N+1)×5)
        reference: ホライズン分の参照と切替重み
        obstacles: 動的障害物
        desc: ロボット記述
        config: MPC設定
        warm_start: 前回の入力列 (N×L)

    Returns:
        MpcResult (command = q̈_m)。改善が無ければ零加速度にフォールバック。
    """
    N, L = config.horizon, desc.joint_count
    q0 = np.asarray(measured_q, dtype=float)
    qd0 = np.asarray(measured_qd, dtype=float)
    guess = _shift(warm_start, (N, L)) if warm_start is not None else reference.qdd.copy()
    guess = np.clip(guess, -config.qdd_max, config.qdd_max)
    bounds = [(-m, m) for _ in range(N) for m in config.qdd_max]

    def fun(u):
        return arm_cost(u, q0, qd0, base_states, reference, obstacles, desc, config)

    u, cost, nit, improved = _solve(fun, guess.ravel(), bounds, config.max_iterations)
    if not improved:
        logger.warning("Arm MPC did not improve; zero-acceleration fallback")
        zero = np.zeros((N, L))
        q, qd = rollout_arm(q0, qd0, zero, config.dt)
        return MpcResult(np.zeros(L), zero, np.hstack([q, qd]), fun(zero.ravel())[0], nit, True)
    inputs = u.reshape(N, L)
    q, qd = rollout_arm(q0, qd0, inputs, config.dt)
    return MpcResult(inputs[0].copy(), inputs, np.hstack([q, qd]), cost, nit, False)
