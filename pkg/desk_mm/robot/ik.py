"""
Desk Mobile Manipulation Toolkit - Inverse Kinematics
減衰最小二乗法によるマルチシード逆運動学
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..geometry.se3 import RigidPose, f_d_rot
from .description import RobotDescription
from .kinematics import compute_chain, frame_matrix, point_jacobians

logger = logging.getLogger(__name__)


def _dls_iterate(desc: RobotDescription, target: RigidPose, base: np.ndarray, seed: np.ndarray,
                 position_only: bool, max_iterations: int, damping: float,
                 pos_tol: float, rot_tol: float) -> Optional[np.ndarray]:
    """1シード分の反復。収束しなければ None"""
    q = desc.clamp(seed)
    R_target = target.rotation_matrix
    L = desc.joint_count
    for _ in range(max_iterations):
        chain = compute_chain(desc, base, q)
        T = frame_matrix(desc, chain, "ee")
        e_pos = target.translation - T[:3, 3]
        rot_err = f_d_rot(T[:3, :3], R_target)
        if np.linalg.norm(e_pos) <= pos_tol and (position_only or rot_err <= rot_tol):
            return q
        Jv, Jw = point_jacobians(chain, L, T[:3, 3])
        if position_only:
            J = Jv[:, 3:]
            e = e_pos
        else:
            J = np.vstack([Jv[:, 3:], Jw[:, 3:]])
            e = np.concatenate([e_pos, Rotation.from_matrix(R_target @ T[:3, :3].T).as_rotvec()])
        dq = J.T @ np.linalg.solve(J @ J.T + damping ** 2 * np.eye(J.shape[0]), e)
        step = np.linalg.norm(dq)
        if step > 0.5:
            dq *= 0.5 / step
        q = desc.clamp(q + dq)
    return None


def solve_ik(desc: RobotDescription,
             target: RigidPose,
             base: Sequence[float],
             seed: Optional[Sequence[float]] = None,
             *,
             seeds: int = 8,
             position_only: bool = False,
             rng: Optional[np.random.Generator] = None,
             max_iterations: int = 200,
             damping: float = 0.02,
             pos_tol: float = 1e-4,
             rot_tol: float = 1e-3) -> List[np.ndarray]:
    """
    逆運動学 (ベース固定)

    Args:
        desc: ロボット記述
        target: 手先目標姿勢 (ワールド座標系)
        base: ベース姿勢 (q_x, q_y, ψ)
        seed: 初期関節角。Noneの場合はゼロ姿勢
        seeds: 試行するシード総数 (seed + 乱数シード)
        position_only: 位置のみ一致させる
        rng: 乱数生成器 (再現性のため)

    Returns:
        関節角解のリスト (到達不能なら空)
    """
    base = np.asarray(base, dtype=float)
    if not np.all(np.isfinite(target.translation)):
        return []

    # 到達距離による早期棄却
    arm_base = compute_chain(desc, base, np.zeros(desc.joint_count)).arm_base
    shoulder = arm_base[:3, 3] + arm_base[:3, :3] @ desc.joints[0].origin[:3, 3]
    if np.linalg.norm(target.translation - shoulder) > desc.max_reach + 1e-6:
        return []

    rng = rng if rng is not None else np.random.default_rng(0)
    candidates = [np.zeros(desc.joint_count) if seed is None else np.asarray(seed, dtype=float)]
    for _ in range(max(seeds - 1, 0)):
        candidates.append(rng.uniform(desc.q_min, desc.q_max))

    solutions: List[np.ndarray] = []
    for start in candidates:
        q = _dls_iterate(desc, target, base, start, position_only, max_iterations, damping,
                         pos_tol, rot_tol)
        if q is None:
            continue
        if all(np.linalg.norm(q - s) > 1e-3 for s in solutions):
            solutions.append(q)
    logger.debug(f"IK: {len(solutions)} solutions from {len(candidates)} seeds")
    return solutions
