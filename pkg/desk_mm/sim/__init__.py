"""
Desk Mobile Manipulation Toolkit - Simulation Bench
シナリオ・姿勢オラクル・運動学シミュレータ・評価指標
"""

from .checks import CheckResult, check_run, run_checks
from .metrics import IdealTimeEstimator, MissionResult, judge_mission, msct, operation_time, ssct
from .oracle import PoseOracle, VisibilityRecord, target_visible
from .runner import (RunResult, ScenarioRunner, export_trace_csv, load_or_build_irm, load_trace,
                     run_scenario, save_trace)
from .scenario import (BENCHMARK_DISPLACEMENTS, PRESETS, Scenario, ScenarioModel, build_scenario,
                       dump_scenario, load_scenario, parse_scenario, preset_scenario, save_scenario)
from .simulator import KinematicSimulator, VelocityCommand, step_sim

__all__ = [
    # シナリオ
    "BENCHMARK_DISPLACEMENTS",
    "PRESETS",
    "Scenario",
    "ScenarioModel",
    "build_scenario",
    "dump_scenario",
    "load_scenario",
    "parse_scenario",
    "preset_scenario",
    "save_scenario",
    # シミュレータ・オラクル
    "KinematicSimulator",
    "VelocityCommand",
    "step_sim",
    "PoseOracle",
    "VisibilityRecord",
    "target_visible",
    # 評価
    "IdealTimeEstimator",
    "MissionResult",
    "judge_mission",
    "msct",
    "operation_time",
    "ssct",
    # 実行
    "RunResult",
    "ScenarioRunner",
    "export_trace_csv",
    "load_or_build_irm",
    "load_trace",
    "run_scenario",
    "save_trace",
    # 検査
    "CheckResult",
    "check_run",
    "run_checks",
]
