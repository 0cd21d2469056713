"""
Desk Mobile Manipulation Toolkit - Trajectory Export
軌道の全精度テキスト記録と読み込み
"""

import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import yaml

from ..exceptions import ValidationError
from .minco import BoundaryCondition, PiecewiseTrajectory, fit_min_effort

logger = logging.getLogger(__name__)

TRAJECTORY_FORMAT_VERSION = "1.0"


def trajectory_to_dict(traj: PiecewiseTrajectory) -> Dict[str, Any]:
    """軌道を辞書形式に変換 (係数は行優先)"""
    return {
        "version": TRAJECTORY_FORMAT_VERSION,
        "s": int(traj.s),
        "segments": int(traj.segment_count),
        "dim": int(traj.dim),
        "durations": [float(v) for v in traj.durations],
        "perception_durations": {int(k): float(v) for k, v in traj.perception_durations.items()},
        "waypoints": traj.waypoints.tolist(),
        "start": {"position": traj.start.position.tolist(), "derivatives": traj.start.derivatives.tolist()},
        "end": {"position": traj.end.position.tolist(), "derivatives": traj.end.derivatives.tolist()},
        "coefficients": [block.reshape(-1).tolist() for block in traj.coeffs],
    }


def trajectory_from_dict(data: Dict[str, Any]) -> PiecewiseTrajectory:
    """辞書から軌道を復元 (係数は記録値を使う)"""
    if str(data.get("version", "")).split(".")[0] != TRAJECTORY_FORMAT_VERSION.split(".")[0]:
        raise ValidationError("Unsupported trajectory format", str(data.get("version")))
    s = int(data["s"])
    dim = int(data["dim"])
    start = BoundaryCondition(data["start"]["position"], data["start"]["derivatives"])
    end = BoundaryCondition(data["end"]["position"], data["end"]["derivatives"])
    traj = fit_min_effort(np.asarray(data["waypoints"], dtype=float).reshape(-1, dim),
                          data["durations"], start, end, s,
                          {int(k): float(v) for k, v in data.get("perception_durations", {}).items()})
    traj.coeffs = np.asarray(data["coefficients"], dtype=float).reshape(traj.segment_count, 2 * s, dim)
    return traj


def save_trajectory(traj: PiecewiseTrajectory, path: Union[str, Path]) -> Path:
    """軌道をYAMLテキストで保存"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(trajectory_to_dict(traj), f, sort_keys=False)
    logger.info(f"Trajectory saved: {path}")
    return path


def load_trajectory(path: Union[str, Path]) -> PiecewiseTrajectory:
    """保存済み軌道の読み込み"""
    with open(path, "r", encoding="utf-8") as f:
        return trajectory_from_dict(yaml.safe_load(f))
