"""
Desk Mobile Manipulation Toolkit - Robot Model
ロボット記述・運動学・逆運動学・車輪写像
"""

from .description import (
    BaseParams,
    JointSpec,
    RobotDescription,
    RobotDescriptionModel,
    load_robot_description,
    parse_description,
    resolve_description,
)
from .ik import solve_ik
from .kinematics import (
    KinematicChain,
    arm_fk_batch,
    base_matrix,
    collision_sphere_positions,
    compute_chain,
    fk_frame,
    frame_link,
    frame_matrix,
    jacobian_ee,
    point_jacobians,
    point_velocity_derivatives,
    self_collision_clearance,
    sphere_world_centers,
)
from .state import WholeBodyState
from .wheels import BaseRates, base_rates, wheel_rates, wheel_rates_from_path

__all__ = [
    # 記述
    "BaseParams",
    "JointSpec",
    "RobotDescription",
    "RobotDescriptionModel",
    "load_robot_description",
    "parse_description",
    "resolve_description",
    "WholeBodyState",
    # 運動学
    "KinematicChain",
    "arm_fk_batch",
    "base_matrix",
    "collision_sphere_positions",
    "compute_chain",
    "fk_frame",
    "frame_link",
    "frame_matrix",
    "jacobian_ee",
    "point_jacobians",
    "point_velocity_derivatives",
    "self_collision_clearance",
    "sphere_world_centers",
    "solve_ik",
    # 車輪
    "BaseRates",
    "base_rates",
    "wheel_rates",
    "wheel_rates_from_path",
]
