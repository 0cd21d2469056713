"""
Desk Mobile Manipulation Toolkit - Trajectory
区分多項式軌道と係数写像
"""

from .export import load_trajectory, save_trajectory, trajectory_from_dict, trajectory_to_dict
from .minco import (
    BoundaryCondition,
    PiecewiseTrajectory,
    basis,
    effort_and_grad,
    fit_min_effort,
    gradient_propagate,
)
from .time_map import free_from_positive, positive_from_free

__all__ = [
    "BoundaryCondition",
    "PiecewiseTrajectory",
    "basis",
    "effort_and_grad",
    "fit_min_effort",
    "gradient_propagate",
    "free_from_positive",
    "positive_from_free",
    "load_trajectory",
    "save_trajectory",
    "trajectory_from_dict",
    "trajectory_to_dict",
]
