"""
Desk Mobile Manipulation Toolkit - Backend Optimizer
全身軌道の制約付き最適化と再計画
"""

from .alm import AlmEvaluation, AlmResult, AlmState, ScalarBoundProblem, phr_penalty, solve_alm
from .constraints import KINDS, ConstraintSample, ConstraintTerm, TimeSet, kind_names
from .evaluate import Evaluation, constraint_vjp, evaluate
from .optimizer import BackendOptimizer, SolveReport, TrajectoryObjective, save_solve_report, solve
from .planner import PlannedTask, PlanResult, TrajectoryPlanner, planned_tasks, splice_boundary
from .problem import DecisionLayout, HeldObject, OptimizationProblem, assemble, rest_boundary

__all__ = [
    # 問題
    "DecisionLayout",
    "HeldObject",
    "OptimizationProblem",
    "assemble",
    "rest_boundary",
    "KINDS",
    "ConstraintSample",
    "ConstraintTerm",
    "TimeSet",
    "kind_names",
    # 評価
    "Evaluation",
    "constraint_vjp",
    "evaluate",
    # ALM
    "AlmEvaluation",
    "AlmResult",
    "AlmState",
    "ScalarBoundProblem",
    "phr_penalty",
    "solve_alm",
    # 求解・再計画
    "BackendOptimizer",
    "SolveReport",
    "TrajectoryObjective",
    "save_solve_report",
    "solve",
    "PlannedTask",
    "PlanResult",
    "TrajectoryPlanner",
    "planned_tasks",
    "splice_boundary",
]
