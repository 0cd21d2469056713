"""
Desk Mobile Manipulation Toolkit - Kinematics
順運動学・ヤコビアン・衝突球配置
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..exceptions import UnknownFrameError
from ..geometry.se3 import RigidPose, axis_angle_matrix, skew
from .description import RobotDescription
from .state import WholeBodyState

FrameRef = Union[str, int]
_EZ = np.array([0.0, 0.0, 1.0])


def base_matrix(x: float, y: float, psi: float) -> np.ndarray:
    """ベース姿勢の同次変換"""
    c, s = np.cos(psi), np.sin(psi)
    T = np.eye(4)
    T[:2, :2] = [[c, -s], [s, c]]
    T[0, 3] = x
    T[1, 3] = y
    return T


def _joint_rotation(axis: np.ndarray, q: float) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = axis_angle_matrix(axis, q)
    return T


@dataclass
class KinematicChain:
    """ある状態での全リンクのワールド座標系姿勢"""

    base: np.ndarray
    arm_base: np.ndarray
    links: List[np.ndarray]
    axes: np.ndarray
    origins: np.ndarray

    @property
    def base_position(self) -> np.ndarray:
        return self.base[:3, 3]

    def link(self, index: int) -> np.ndarray:
        if index == 0:
            return self.base
        return self.links[index - 1]


def compute_chain(desc: RobotDescription, base: Sequence[float], arm: Sequence[float]) -> KinematicChain:
    """
    運動学チェーンの計算

    Args:
        desc: ロボット記述
        base: (q_x, q_y, ψ)
        arm: 関節角

    Returns:
        KinematicChain
    """
    T_base = base_matrix(base[0], base[1], base[2])
    T = T_base @ desc.mount
    arm_base = T
    links = []
    axes = np.zeros((desc.joint_count, 3))
    origins = np.zeros((desc.joint_count, 3))
    for j, (joint, q) in enumerate(zip(desc.joints, arm)):
        T = T @ joint.origin @ _joint_rotation(joint.axis, q)
        axes[j] = T[:3, :3] @ joint.axis
        origins[j] = T[:3, 3]
        links.append(T)
    return KinematicChain(T_base, arm_base, links, axes, origins)


def frame_matrix(desc: RobotDescription, chain: KinematicChain, frame: FrameRef) -> np.ndarray:
    """フレーム名/リンク番号のワールド姿勢 (4×4)"""
    if frame == "ee":
        return chain.links[-1] @ desc.ee_frame
    if frame == "camera":
        return chain.links[-1] @ desc.camera_frame
    if frame == "arm_base":
        return chain.arm_base
    if frame == "base":
        return chain.base
    if isinstance(frame, (int, np.integer)) and 0 <= int(frame) <= desc.joint_count:
        return chain.link(int(frame))
    raise UnknownFrameError("Unknown frame", str(frame))


def fk_frame(desc: RobotDescription, state: WholeBodyState, frame: FrameRef = "ee") -> RigidPose:
    """
    順運動学

    Args:
        desc: ロボット記述
        state: 全身状態
        frame: "ee" | "camera" | "arm_base" | "base" | リンク番号 (0..L)

    Returns:
        ワールド座標系の姿勢

    Raises:
        UnknownFrameError: 不明なフレーム
    """
    chain = compute_chain(desc, state.base, state.arm)
    return RigidPose.from_matrix(frame_matrix(desc, chain, frame))


def frame_link(desc: RobotDescription, frame: FrameRef) -> int:
    """フレームが固定されているリンク番号"""
    if frame in ("ee", "camera"):
        return desc.joint_count
    if frame in ("base", "arm_base"):
        return 0
    return int(frame)


def _revolutes(chain: KinematicChain, link: int) -> List[Tuple[int, np.ndarray, np.ndarray]]:
    """(一般化座標の番号, 軸, 原点) の回転自由度列 (ψ が先頭)"""
    revs = [(2, _EZ, chain.base_position)]
    revs.extend((3 + j, chain.axes[j], chain.origins[j]) for j in range(link))
    return revs


def point_jacobians(chain: KinematicChain, link: int, point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    リンクに固定された点の一般化座標 g = (x, y, ψ, q_m) に関するヤコビアン

    Returns:
        (並進 3×(3+L), 回転 3×(3+L))
    """
    n = 3 + len(chain.links)
    Jv = np.zeros((3, n))
    Jw = np.zeros((3, n))
    Jv[0, 0] = 1.0
    Jv[1, 1] = 1.0
    for k, axis, origin in _revolutes(chain, link):
        Jv[:, k] = np.cross(axis, point - origin)
        Jw[:, k] = axis
    return Jv, Jw


def point_velocity_derivatives(chain: KinematicChain, link: int, point: np.ndarray,
                               g_dot: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray,
                                                           np.ndarray, np.ndarray, np.ndarray]:
    """
    点の速度 v = Jv ġ, 角速度 ω = Jw ġ と、その一般化座標 g に関する微分

    Returns:
        (v, ω, dv/dg, dω/dg, Jv, Jw)
    """
    Jv, Jw = point_jacobians(chain, link, point)
    n = Jv.shape[1]
    revs = _revolutes(chain, link)
    dv = np.zeros((3, n))
    dw = np.zeros((3, n))
    for idx_i, (i, a_i, o_i) in enumerate(revs):
        lever_i = np.cross(a_i, point - o_i)
        for idx_r, (r, a_r, o_r) in enumerate(revs):
            rate = g_dot[r]
            if rate == 0.0:
                continue
            if idx_r > idx_i:
                # 下流の軸と原点は g_i の回転で一緒に動く
                dv[:, i] += rate * np.cross(a_i, np.cross(a_r, point - o_r))
                dw[:, i] += rate * np.cross(a_i, a_r)
            else:
                dv[:, i] += rate * np.cross(a_r, lever_i)
    return Jv @ g_dot, Jw @ g_dot, dv, dw, Jv, Jw


def jacobian_ee(desc: RobotDescription, state: WholeBodyState) -> np.ndarray:
    """
    手先の幾何ヤコビアン

    列は (ベース前進速度, ベース横速度, ベースヨーレート, 関節1..L)。
    横速度列は差動二輪の拘束方向で、運動学的な感度として保持する。

    Returns:
        6×(3+L) 行列 (上3行: 並進, 下3行: 回転)
    """
    chain = compute_chain(desc, state.base, state.arm)
    p_ee = frame_matrix(desc, chain, "ee")[:3, 3]
    Jv, Jw = point_jacobians(chain, desc.joint_count, p_ee)
    psi = state.base[2]
    forward = np.array([np.cos(psi), np.sin(psi)])
    lateral = np.array([-np.sin(psi), np.cos(psi)])
    J = np.zeros((6, 3 + desc.joint_count))
    J[:3, 0] = Jv[:, :2] @ forward
    J[:3, 1] = Jv[:, :2] @ lateral
    J[:3, 2:] = Jv[:, 2:]
    J[3:, 2:] = Jw[:, 2:]
    return J


def sphere_world_centers(desc: RobotDescription, chain: KinematicChain) -> np.ndarray:
    """全衝突球のワールド中心 (S×3)"""
    centers = np.zeros((desc.sphere_count, 3))
    for idx, (link, local) in enumerate(zip(desc.sphere_links, desc.sphere_centers)):
        T = chain.link(int(link))
        centers[idx] = T[:3, :3] @ local + T[:3, 3]
    return centers


def collision_sphere_positions(desc: RobotDescription,
                               state: WholeBodyState) -> List[Tuple[np.ndarray, float, int]]:
    """衝突球の (ワールド中心, 半径, リンク番号) の列"""
    chain = compute_chain(desc, state.base, state.arm)
    centers = sphere_world_centers(desc, chain)
    return [(centers[i], float(desc.sphere_radii[i]), int(desc.sphere_links[i]))
            for i in range(desc.sphere_count)]


def self_collision_clearance(desc: RobotDescription, centers: np.ndarray) -> np.ndarray:
    """
    自己干渉ペアの最小クリアランス

    Args:
        centers: S×3 または N×S×3 の球中心

    Returns:
        スカラーまたは N 要素の配列 (ペアが無ければ +inf)
    """
    pairs = desc.self_collision_pairs
    centers = np.asarray(centers)
    if len(pairs) == 0:
        return np.full(centers.shape[:-2], np.inf) if centers.ndim == 3 else np.array(np.inf)
    diff = centers[..., pairs[:, 0], :] - centers[..., pairs[:, 1], :]
    gaps = np.linalg.norm(diff, axis=-1) - desc.sphere_radii[pairs[:, 0]] - desc.sphere_radii[pairs[:, 1]]
    return gaps.min(axis=-1)


def arm_fk_batch(desc: RobotDescription, arms: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    ベース原点・ヨー0での一括順運動学

    Args:
        arms: N×L の関節角

    Returns:
        (手先姿勢 N×4×4, 衝突球中心 N×S×3)
    """
    arms = np.atleast_2d(np.asarray(arms, dtype=float))
    count = arms.shape[0]
    T = np.broadcast_to(desc.mount, (count, 4, 4)).copy()
    frames = [np.broadcast_to(np.eye(4), (count, 4, 4))]
    for j, joint in enumerate(desc.joints):
        K = skew(joint.axis)
        s = np.sin(arms[:, j])[:, None, None]
        c = np.cos(arms[:, j])[:, None, None]
        rot = np.zeros((count, 4, 4))
        rot[:, :3, :3] = np.eye(3) + s * K + (1.0 - c) * (K @ K)
        rot[:, 3, 3] = 1.0
        T = np.einsum("nij,jk,nkl->nil", T, joint.origin, rot)
        frames.append(T)
    ee = np.einsum("nij,jk->nik", T, desc.ee_frame)

    centers = np.zeros((count, desc.sphere_count, 3))
    for idx, (link, local) in enumerate(zip(desc.sphere_links, desc.sphere_centers)):
        F = frames[int(link)]
        centers[:, idx, :] = np.einsum("nij,j->ni", F[:, :3, :3], local) + F[:, :3, 3]
    return ee, centers
