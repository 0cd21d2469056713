"""
Desk Mobile Manipulation Toolkit - Search Feasibility Checks
探索用の衝突判定とタスク軌道整合性 (同期サンプリング)
"""

import logging
from typing import Optional, Sequence

import numpy as np

from ..geometry.se3 import RigidPose, f_d_rot
from ..robot.description import RobotDescription
from ..robot.kinematics import compute_chain, frame_matrix, self_collision_clearance, sphere_world_centers
from ..world.esdf import EsdfGrid

logger = logging.getLogger(__name__)


def base_clear(desc: RobotDescription, pose: Sequence[float], world: Optional[EsdfGrid],
               d_s: float = 0.0) -> bool:
    """ベース球 (リンク0) のみの環境クリアランス判定"""
    if world is None:
        return True
    mask = desc.sphere_links == 0
    if not mask.any():
        return True
    x, y, psi = pose
    c, s = np.cos(psi), np.sin(psi)
    local = desc.sphere_centers[mask]
    points = np.column_stack([x + c * local[:, 0] - s * local[:, 1],
                              y + s * local[:, 0] + c * local[:, 1], local[:, 2]])
    values, _, _ = world.query_batch(points)
    return bool(np.all(values - desc.sphere_radii[mask] >= d_s))


def state_clear(desc: RobotDescription, base: Sequence[float], arm: Sequence[float],
                world: Optional[EsdfGrid], d_s: float = 0.0, d_self: float = 0.0) -> bool:
    """全衝突球の環境クリアランス ≥ d_s かつ自己干渉クリアランス ≥ d_self"""
    if not desc.within_limits(arm, tol=1e-9):
        return False
    chain = compute_chain(desc, base, arm)
    centers = sphere_world_centers(desc, chain)
    if world is not None:
        values, _, _ = world.query_batch(centers)
        if np.any(values - desc.sphere_radii < d_s):
            return False
    return float(self_collision_clearance(desc, centers)) >= d_self


def resample_base_path(poses: np.ndarray, count: int) -> np.ndarray:
    """
    ベース姿勢列を弧長で count 点に再サンプル

    ヨーは最短角で線形補間する。
    """
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    if count <= 1:
        return poses[-1:].copy()
    if len(poses) == 1:
        return np.repeat(poses, count, axis=0)
    seg = np.linalg.norm(np.diff(poses[:, :2], axis=0), axis=1)
    yaw_step = np.abs(np.angle(np.exp(1j * np.diff(poses[:, 2]))))
    # 停留区間でもヨー変化で進むように弧長へ加算
    seg = seg + 1e-3 * yaw_step
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0.0:
        return np.repeat(poses[:1], count, axis=0)
    targets = np.linspace(0.0, s[-1], count)
    out = np.zeros((count, 3))
    for i, t in enumerate(targets):
        j = min(int(np.searchsorted(s, t, side="right") - 1), len(poses) - 2)
        frac = 0.0 if seg[j] <= 0.0 else (t - s[j]) / seg[j]
        out[i, :2] = poses[j, :2] + frac * (poses[j + 1, :2] - poses[j, :2])
        dpsi = np.angle(np.exp(1j * (poses[j + 1, 2] - poses[j, 2])))
        out[i, 2] = poses[j, 2] + frac * dpsi
    return out


def check_task_consistency(desc: RobotDescription, base_segment: np.ndarray, q_start: Sequence[float],
                           q_end: Sequence[float], task_poses: Sequence[RigidPose], grasp: RigidPose,
                           lam: float = 0.1, threshold: float = 0.03) -> bool:
    """
    タスク軌道整合性の検査

    関節角を線形補間し、再サンプルしたベース経路と合わせた手先姿勢を
    目標 (物体姿勢 · 把持) と比較する。e_k = 位置誤差 + λ·測地角。

    Args:
        base_segment: 直前キーポイントから現在までのベース姿勢列
        q_start, q_end: 両端の関節角
        task_poses: 同期サンプルした物体姿勢 (K+1個)
        grasp: 物体→手先の把持変換
        lam: λ (m/rad)
        threshold: δ_thresh (m)

    Returns:
        max_k e_k < δ_thresh なら True
    """
    count = len(task_poses)
    if count <= 1:
        return True
    K = count - 1
    bases = resample_base_path(base_segment, count)
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    worst = 0.0
    for k in range(count):
        arm = q_start + (k / K) * (q_end - q_start)
        T = frame_matrix(desc, compute_chain(desc, bases[k], arm), "ee")
        target = task_poses[k] @ grasp
        e = float(np.linalg.norm(T[:3, 3] - target.translation)) + lam * f_d_rot(T[:3, :3], target.rotation_matrix)
        worst = max(worst, e)
        if worst >= threshold:
            logger.debug(f"Task consistency violated at sample {k}: e={e:.4f}")
            return False
    return True
