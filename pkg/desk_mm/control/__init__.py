"""
Desk Mobile Manipulation Toolkit - Execution Controller
軌道ワーピング・切替重み・カスケードMPC
"""

from .controller import CascadedController, ControlCommand, GripperEvent
from .mpc import (ArmHorizon, BaseHorizon, ControllerConfig, ExtendedState, MpcResult, arm_cost,
                  arm_mpc_step, base_cost, base_mpc_step, rollout_arm, rollout_base, task_cost)
from .reference import ReferenceSample, ReferenceTrajectory, sample_trajectory
from .switching import switch_weights
from .warping import (BRANCHES, WarpSchedule, WarpWindow, boundary_jumps, branch_index, warp_branch,
                      warp_reference, warped_or_nominal)

__all__ = [
    # 参照
    "ReferenceSample",
    "ReferenceTrajectory",
    "sample_trajectory",
    # ワーピング・切替
    "WarpSchedule",
    "WarpWindow",
    "BRANCHES",
    "boundary_jumps",
    "branch_index",
    "warp_branch",
    "warp_reference",
    "warped_or_nominal",
    "switch_weights",
    # MPC
    "ArmHorizon",
    "BaseHorizon",
    "ControllerConfig",
    "ExtendedState",
    "MpcResult",
    "arm_cost",
    "arm_mpc_step",
    "base_cost",
    "base_mpc_step",
    "rollout_arm",
    "rollout_base",
    "task_cost",
    # 制御周期
    "CascadedController",
    "ControlCommand",
    "GripperEvent",
]
