"""
Desk Mobile Manipulation Toolkit - Planar Ellipses
2次元楕円の表現・距離・PCAフィット
"""

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from ..exceptions import ParameterError


@dataclass(frozen=True)
class Ellipse2:
    """中心 o・回転 R・半軸 diag(a, b) の平面楕円 (a ≥ b > 0)"""

    center: np.ndarray
    rotation: np.ndarray
    semi_axes: Tuple[float, float]

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(2)
        R = np.asarray(self.rotation, dtype=float).reshape(2, 2)
        a, b = (float(v) for v in self.semi_axes)
        if not (a >= b > 0.0):
            raise ParameterError("Ellipse semi-axes must satisfy a >= b > 0", f"a={a}, b={b}")
        if np.max(np.abs(R.T @ R - np.eye(2))) > 1e-9:
            raise ParameterError("Ellipse rotation must be orthonormal")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "semi_axes", (a, b))

    @classmethod
    def from_angle(cls, center: Sequence[float], angle: float, a: float, b: float) -> "Ellipse2":
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.asarray(center, dtype=float), np.array([[c, -s], [s, c]]), (a, b))

    @classmethod
    def circle(cls, center: Sequence[float], radius: float) -> "Ellipse2":
        return cls.from_angle(center, 0.0, radius, radius)

    @property
    def area(self) -> float:
        return float(np.pi * self.semi_axes[0] * self.semi_axes[1])

    @property
    def angle(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    def canonical(self, p: Sequence[float]) -> np.ndarray:
        """正準座標 p̃ = Q⁻¹Rᵀ(p − o)"""
        local = self.rotation.T @ (np.asarray(p, dtype=float) - self.center)
        return local / np.asarray(self.semi_axes)

    def contains(self, p: Sequence[float], inflate: float = 0.0) -> bool:
        if inflate > 0.0:
            return d_point_ellipse(p, self) <= inflate
        return float(np.linalg.norm(self.canonical(p))) <= 1.0

    def boundary_points(self, count: int) -> np.ndarray:
        """境界上の等角度サンプル (count×2)"""
        theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        unit = np.stack([np.cos(theta) * self.semi_axes[0], np.sin(theta) * self.semi_axes[1]], axis=1)
        return unit @ self.rotation.T + self.center

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {"center": [float(v) for v in self.center], "angle": self.angle,
                "semi_axes": list(self.semi_axes)}


def d_point_ellipse_grad(p: Sequence[float], ellipse: Ellipse2) -> Tuple[float, np.ndarray]:
    """
    点から楕円までの距離 (放射射影) と勾配

    境界点 o + RQ p̃/‖p̃‖ は p − o と同一直線上なので
    距離は ‖p − o‖(1 − 1/‖p̃‖) となる。
    """
    u = np.asarray(p, dtype=float) - ellipse.center
    A = np.diag(1.0 / np.asarray(ellipse.semi_axes)) @ ellipse.rotation.T
    s = float(np.linalg.norm(A @ u))
    if s <= 1.0:
        return 0.0, np.zeros(2)
    n = float(np.linalg.norm(u))
    value = n * (1.0 - 1.0 / s)
    grad = (u / n) * (1.0 - 1.0 / s) + n * (A.T @ A @ u) / s ** 3
    return value, grad


def d_point_ellipse(p: Sequence[float], ellipse: Ellipse2) -> float:
    """点から楕円までの距離"""
    return d_point_ellipse_grad(p, ellipse)[0]


def fit_ellipse(points: np.ndarray, coverage: float = 0.95, min_semi_axis: float = 0.025) -> Ellipse2:
    """
    点群への主成分楕円フィット

    Args:
        points: N×2 の点 (セル中心)
        coverage: 楕円内に含める点の割合
        min_semi_axis: 半軸の下限 (m)

    Returns:
        平均を中心、共分散の主軸を向きとし、被覆率を満たすよう拡大した楕円
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ParameterError("Cannot fit an ellipse to an empty point set")
    center = pts.mean(axis=0)
    if len(pts) == 1:
        return Ellipse2.circle(center, min_semi_axis)

    eigvals, eigvecs = np.linalg.eigh(np.cov(pts.T, bias=True))
    major = eigvecs[:, 1]
    minor = np.array([-major[1], major[0]])
    R = np.stack([major, minor], axis=1)
    sigma = np.sqrt(np.maximum(eigvals[::-1], 1e-12))

    local = (pts - center) @ R
    radii = np.sqrt((local[:, 0] / sigma[0]) ** 2 + (local[:, 1] / sigma[1]) ** 2)
    scale = float(np.quantile(radii, coverage, method="higher"))
    a = max(scale * sigma[0], min_semi_axis)
    b = max(scale * sigma[1], min_semi_axis)
    if b > a:
        # 下限で長短が入れ替わった場合
        R = np.stack([minor, -major], axis=1)
        a, b = b, a
    return Ellipse2(center, R, (a, b))
