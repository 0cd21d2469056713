"""
Desk Mobile Manipulation Toolkit - SE(3) Primitives
剛体姿勢の表現・合成・補間と回転距離
"""

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..exceptions import DomainError


@dataclass(frozen=True)
class RigidPose:
    """剛体姿勢 (単位クォータニオン xyzw + 並進)"""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        quat = np.asarray(self.rotation, dtype=float).reshape(4)
        norm = np.linalg.norm(quat)
        if not np.isfinite(norm) or norm < 1e-12:
            raise DomainError("Quaternion must be finite and non-zero", str(self.rotation))
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", quat / norm)
        object.__setattr__(self, "translation", trans)

    # ---- 生成 ----
    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(3))

    @classmethod
    def from_rotation_matrix(cls, R: np.ndarray, t: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat(), t)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "RigidPose":
        T = np.asarray(T, dtype=float)
        return cls.from_rotation_matrix(T[:3, :3], T[:3, 3])

    @classmethod
    def from_xyz_rpy(cls, xyz: Sequence[float], rpy: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(Rotation.from_euler("xyz", rpy).as_quat(), xyz)

    @classmethod
    def from_planar(cls, x: float, y: float, psi: float, z: float = 0.0) -> "RigidPose":
        return cls(Rotation.from_euler("z", psi).as_quat(), (x, y, z))

    # ---- 抽出演算子 ----
    @property
    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.rotation).as_matrix()

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix
        T[:3, 3] = self.translation
        return T

    @property
    def p(self) -> np.ndarray:
        return self.translation

    @property
    def z_axis(self) -> np.ndarray:
        return self.rotation_matrix[:, 2]

    @property
    def xy(self) -> np.ndarray:
        return self.translation[:2].copy()

    @property
    def yaw(self) -> float:
        R = self.rotation_matrix
        return float(np.arctan2(R[1, 0], R[0, 0]))

    # ---- 群演算 ----
    def compose(self, other: "RigidPose") -> "RigidPose":
        """self ∘ other"""
        r_self = Rotation.from_quat(self.rotation)
        rot = r_self * Rotation.from_quat(other.rotation)
        return RigidPose(rot.as_quat(), self.translation + r_self.apply(other.translation))

    def __matmul__(self, other: "RigidPose") -> "RigidPose":
        return self.compose(other)

    def inverse(self) -> "RigidPose":
        r_inv = Rotation.from_quat(self.rotation).inv()
        return RigidPose(r_inv.as_quat(), -r_inv.apply(self.translation))

    def transform_point(self, point: Sequence[float]) -> np.ndarray:
        return Rotation.from_quat(self.rotation).apply(np.asarray(point, dtype=float)) + self.translation

    def translated(self, offset: Sequence[float]) -> "RigidPose":
        return RigidPose(self.rotation, self.translation + np.asarray(offset, dtype=float))

    # ---- 比較・直列化 ----
    def distance_to(self, other: "RigidPose") -> Tuple[float, float]:
        """(位置誤差, 回転角誤差)"""
        return (float(np.linalg.norm(self.translation - other.translation)),
                f_d_rot(self.rotation_matrix, other.rotation_matrix))

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {"xyz": [float(v) for v in self.translation],
                "quat": [float(v) for v in self.rotation]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RigidPose":
        xyz = data.get("xyz", [0.0, 0.0, 0.0])
        if "quat" in data:
            return cls(data["quat"], xyz)
        return cls.from_xyz_rpy(xyz, data.get("rpy", [0.0, 0.0, 0.0]))


def skew(v: Sequence[float]) -> np.ndarray:
    """歪対称行列 [v]×"""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_matrix(axis: Sequence[float], angle: float) -> np.ndarray:
    """Rodriguesの公式"""
    a = np.asarray(axis, dtype=float)
    K = skew(a)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def f_d_rot(R1: np.ndarray, R2: np.ndarray) -> float:
    """回転距離 arccos(0.5·tr(R1ᵀR2) − 0.5)"""
    c = 0.5 * np.trace(np.asarray(R1).T @ np.asarray(R2)) - 0.5
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def trace_gradient(R: np.ndarray, R_target: np.ndarray) -> np.ndarray:
    """
    tr(R_targetᵀ R) の勾配 (R ← exp([δ]×)R のワールド系摂動 δ について)

    Returns:
        3次元勾配ベクトル
    """
    M = np.asarray(R) @ np.asarray(R_target).T
    return np.array([M[1, 2] - M[2, 1], M[2, 0] - M[0, 2], M[0, 1] - M[1, 0]])


def f_d_rot_grad(R: np.ndarray, R_target: np.ndarray) -> Tuple[float, np.ndarray]:
    """f_d_rot と第1引数のワールド系摂動に関する勾配"""
    c_raw = 0.5 * np.trace(np.asarray(R).T @ np.asarray(R_target)) - 0.5
    c = float(np.clip(c_raw, -1.0, 1.0))
    angle = float(np.arccos(c))
    denom = 1.0 - c * c
    if denom < 1e-12:
        return angle, np.zeros(3)
    grad = -0.5 * trace_gradient(R, R_target) / np.sqrt(denom)
    return angle, grad


def interp_se3(pose_a: RigidPose, pose_b: RigidPose, alpha: float) -> RigidPose:
    """
    SE(3)補間 (回転はSLERP、並進は線形)

    Args:
        pose_a: α=0 の姿勢
        pose_b: α=1 の姿勢
        alpha: 補間係数 [0,1]

    Returns:
        補間姿勢
    """
    alpha = float(np.clip(alpha, 0.0, 1.0))
    if alpha == 0.0:
        return pose_a
    if alpha == 1.0:
        return pose_b
    r_a = Rotation.from_quat(pose_a.rotation)
    # as_rotvec は [0, π] の角度を返すので常に短い弧
    delta = (r_a.inv() * Rotation.from_quat(pose_b.rotation)).as_rotvec()
    rot = r_a * Rotation.from_rotvec(alpha * delta)
    trans = (1.0 - alpha) * pose_a.translation + alpha * pose_b.translation
    return RigidPose(rot.as_quat(), trans)
