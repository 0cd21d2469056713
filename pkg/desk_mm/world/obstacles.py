"""
Desk Mobile Manipulation Toolkit - Dynamic Obstacles
等速直線運動の円柱障害物
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from ..exceptions import ParameterError


@dataclass(frozen=True)
class DynamicObstacle:
    """2D円柱として扱う移動障害物"""

    position: np.ndarray
    velocity: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(2))
        if not self.radius > 0.0:
            raise ParameterError("Obstacle radius must be positive", str(self.radius))

    def to_dict(self) -> Dict[str, Any]:
        return {"position": [float(v) for v in self.position],
                "velocity": [float(v) for v in self.velocity],
                "radius": float(self.radius)}


def predict_obstacle(obstacle: DynamicObstacle, t: float) -> np.ndarray:
    """時刻 t の予測位置 p(0) + v·t"""
    return obstacle.position + obstacle.velocity * max(float(t), 0.0)
