"""
Desk Mobile Manipulation Toolkit
卓上スケール移動マニピュレータの全身軌道計画・実行制御・閉ループ評価

Version: 0.1.0
"""

__version__ = "0.1.0"

from .backend.planner import PlanResult, TrajectoryPlanner
from .control.controller import CascadedController
from .core.settings import ToolkitSettings, load_settings
from .frontend.planner import FrontendPlanner
from .geometry.se3 import RigidPose
from .reachability.irm import InverseReachabilityMap, build_irm
from .robot.description import RobotDescription, load_robot_description
from .sim.runner import RunResult, run_scenario
from .sim.scenario import build_scenario, load_scenario
from .trajectory.minco import PiecewiseTrajectory, fit_min_effort
from .world.esdf import EsdfGrid
from .world.scene import build_world

__all__ = [
    "RigidPose",
    "RobotDescription",
    "load_robot_description",
    "EsdfGrid",
    "build_world",
    "PiecewiseTrajectory",
    "fit_min_effort",
    "InverseReachabilityMap",
    "build_irm",
    "FrontendPlanner",
    "TrajectoryPlanner",
    "PlanResult",
    "CascadedController",
    "ToolkitSettings",
    "load_settings",
    "RunResult",
    "run_scenario",
    "build_scenario",
    "load_scenario",
]
