"""
Desk Mobile Manipulation Toolkit - Frontend Planner
階層的全身経路探索
"""

from .arm_search import GraphEdge, LayeredGraph, LayerNode, WholeBodyPath, build_layered_graph, search_arm_path
from .base_search import (
    BasePathResult,
    MotionPrimitive,
    SearchNode,
    motion_primitives,
    search_base_path,
    verify_reachability,
)
from .bundle import save_warm_start, warm_start_to_dict
from .feasibility import base_clear, check_task_consistency, resample_base_path, state_clear
from .heuristic import progress_heuristic
from .planner import FrontendPlanner
from .tasks import GripperSwitch, Keypoint, PlaceRegion, TaskSpec, continues_from, default_gripper, discretize_tasks

__all__ = [
    # タスク
    "GripperSwitch",
    "Keypoint",
    "PlaceRegion",
    "TaskSpec",
    "continues_from",
    "default_gripper",
    "discretize_tasks",
    # 探索
    "BasePathResult",
    "MotionPrimitive",
    "SearchNode",
    "motion_primitives",
    "progress_heuristic",
    "search_base_path",
    "verify_reachability",
    "GraphEdge",
    "LayerNode",
    "LayeredGraph",
    "WholeBodyPath",
    "build_layered_graph",
    "search_arm_path",
    # 検査
    "base_clear",
    "check_task_consistency",
    "resample_base_path",
    "state_clear",
    # 統合
    "FrontendPlanner",
    "save_warm_start",
    "warm_start_to_dict",
]
