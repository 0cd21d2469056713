"""
Desk Mobile Manipulation Toolkit - Backend Optimizer
ALMによる全身軌道の求解と求解レポート
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from ..core.settings import AlmSettings
from ..logging.structured_logger import StructuredLogger
from ..performance.profiler import PerformanceProfiler
from ..trajectory.minco import PiecewiseTrajectory
from .alm import AlmEvaluation, AlmResult, Bounds, solve_alm
from .evaluate import Evaluation, constraint_vjp, evaluate
from .problem import OptimizationProblem

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = "1.0"
VALIDATION_DENSITY_FACTOR = 4


class TrajectoryObjective:
    """
    OptimizationProblem を ALM の制約付き問題として見せるアダプター

    直近の評価点をキャッシュし、evaluate と constraint_vjp が同じ x で
    呼ばれたときに軌道・運動学を再計算しない。
    """

    def __init__(self, problem: OptimizationProblem, samples_per_segment: Optional[int] = None):
        self.problem = problem
        self.samples_per_segment = samples_per_segment
        self.x0 = problem.x0.copy()
        self.evaluations = 0
        self._key: Optional[bytes] = None
        self._cached: Optional[Evaluation] = None

    @property
    def bounds(self) -> Optional[Bounds]:
        return self.problem.bounds

    def full_evaluation(self, x: np.ndarray) -> Evaluation:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key != self._key:
            self._cached = evaluate(self.problem, x, self.samples_per_segment)
            self._key = key
            self.evaluations += 1
        return self._cached

    def evaluate(self, x: np.ndarray) -> AlmEvaluation:
        ev = self.full_evaluation(x)
        eq = [s for s in ev.samples if s.equality]
        ineq = [s for s in ev.samples if not s.equality]
        return AlmEvaluation(ev.cost, ev.gradient,
                             np.array([s.value for s in eq]), np.array([s.value for s in ineq]),
                             np.array([s.weight for s in eq]), np.array([s.weight for s in ineq]))

    def constraint_vjp(self, x: np.ndarray, eq_coef: np.ndarray, ineq_coef: np.ndarray) -> np.ndarray:
        ev = self.full_evaluation(x)
        coefficients = np.zeros(len(ev.samples))
        eq_iter = iter(eq_coef)
        ineq_iter = iter(ineq_coef)
        for k, sample in enumerate(ev.samples):
            coefficients[k] = next(eq_iter) if sample.equality else next(ineq_iter)
        return constraint_vjp(self.problem, ev.context, ev.samples, coefficients)


@dataclass
class SolveReport:
    """求解レポート"""

    status: str
    converged: bool
    feasible: bool
    max_violation: float
    violations: Dict[str, float]
    validation_violations: Dict[str, float]
    cost: float
    total_duration: float
    durations: List[float]
    perception_durations: List[float]
    outer_iterations: int
    inner_iterations: int
    evaluations: int
    solve_ms: float
    validation_ms: float = 0.0
    segments: int = 0
    constraint_terms: int = 0
    history: List[Tuple[float, float, float]] = field(default_factory=list)

    @property
    def validation_max(self) -> float:
        return max(self.validation_violations.values(), default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        """辞書形式に変換"""
        data = asdict(self)
        data["version"] = REPORT_FORMAT_VERSION
        data["history"] = [list(h) for h in self.history]
        data["validation_max"] = self.validation_max
        return data


def save_solve_report(report: SolveReport, path: Union[str, Path]) -> Path:
    """求解レポートをYAMLで保存"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(report.to_dict(), f, sort_keys=False)
    logger.info(f"Solve report saved: {path}")
    return path


def _status(result: AlmResult) -> str:
    if result.converged:
        return "converged"
    if result.timed_out:
        return "timeout"
    return "feasible" if result.feasible else "infeasible"


class BackendOptimizer:
    """軌道最適化器"""

    def __init__(self, settings: Optional[AlmSettings] = None,
                 profiler: Optional[PerformanceProfiler] = None,
                 op_logger: Optional[StructuredLogger] = None):
        """
        初期化

        Args:
            settings: ALM設定
            profiler: 計測器 (求解時間)
            op_logger: 求解記録の出力先
        """
        self.settings = settings or AlmSettings()
        self.profiler = profiler or PerformanceProfiler()
        self.op_logger = op_logger
        logger.info("BackendOptimizer initialized")

    def solve(self, problem: OptimizationProblem, deadline: Optional[float] = None,
              validate: bool = True) -> Tuple[PiecewiseTrajectory, SolveReport]:
        """
        最適化問題を解く

        反復上限で ε_cons を満たさない場合も最良点を返し、レポートで infeasible を示す。

        Args:
            problem: assemble 済みの問題
            deadline: time.perf_counter() 基準の打ち切り時刻
            validate: 4倍密度での違反検査を行うかどうか

        Returns:
            (軌道, SolveReport)
        """
        objective = TrajectoryObjective(problem)
        with self.profiler.profile("backend.solve", segments=problem.layout.segments) as record:
            result = solve_alm(objective, self.settings, deadline)
        final = objective.full_evaluation(result.x)
        traj, Tp, _ = problem.decode(result.x)

        validation: Dict[str, float] = {}
        validation_ms = 0.0
        if validate:
            begin = time.perf_counter()
            dense = evaluate(problem, result.x,
                             VALIDATION_DENSITY_FACTOR * problem.settings.samples_per_segment)
            validation = dense.violations_by_kind()
            validation_ms = (time.perf_counter() - begin) * 1000.0

        report = SolveReport(
            status=_status(result), converged=result.converged, feasible=result.feasible,
            max_violation=float(result.max_violation), violations=final.violations_by_kind(),
            validation_violations=validation, cost=float(final.cost),
            total_duration=traj.total_duration, durations=[float(v) for v in traj.durations],
            perception_durations=[float(v) for v in Tp], outer_iterations=result.outer_iterations,
            inner_iterations=result.inner_iterations, evaluations=objective.evaluations,
            solve_ms=record.duration_ms, validation_ms=validation_ms, segments=problem.layout.segments,
            constraint_terms=len(problem.terms), history=list(result.history))

        if self.op_logger is not None:
            self.op_logger.log_operation("backend.solve", "success" if result.feasible else report.status,
                                         record.duration_ms, max_violation=report.max_violation,
                                         outer=report.outer_iterations, inner=report.inner_iterations,
                                         total_duration=report.total_duration)
        logger.info(f"Solve {report.status}: violation={report.max_violation:.2e}, "
                    f"duration={report.total_duration:.2f} s, {record.duration_ms:.0f} ms")
        return traj, report


def solve(problem: OptimizationProblem, settings: Optional[AlmSettings] = None,
          deadline: Optional[float] = None, validate: bool = True) -> Tuple[PiecewiseTrajectory, SolveReport]:
    """BackendOptimizer(settings).solve の簡易版"""
    return BackendOptimizer(settings).solve(problem, deadline, validate)
