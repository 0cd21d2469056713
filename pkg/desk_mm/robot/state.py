"""
Desk Mobile Manipulation Toolkit - Whole-body State
ベース平面姿勢 + 関節角の状態
"""

from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np


@dataclass(frozen=True)
class WholeBodyState:
    """全身状態 x = [x_b, q_m]"""

    base: np.ndarray  # (q_x, q_y, ψ)
    arm: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", np.asarray(self.base, dtype=float).reshape(3))
        object.__setattr__(self, "arm", np.asarray(self.arm, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, joint_count: int) -> "WholeBodyState":
        return cls(np.zeros(3), np.zeros(joint_count))

    @property
    def xy(self) -> np.ndarray:
        return self.base[:2].copy()

    @property
    def yaw(self) -> float:
        return float(self.base[2])

    def configuration(self) -> np.ndarray:
        """軌道の一般化座標 [q_x, q_y, q_m] (ヨーは速度方向から決まる)"""
        return np.concatenate([self.base[:2], self.arm])

    def with_arm(self, arm: Sequence[float]) -> "WholeBodyState":
        return WholeBodyState(self.base, np.asarray(arm, dtype=float))

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        return {"base": [float(v) for v in self.base], "arm": [float(v) for v in self.arm]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WholeBodyState":
        return cls(data["base"], data["arm"])
