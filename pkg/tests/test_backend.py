"""
Desk Mobile Manipulation Toolkit - Backend Tests
拡張ラグランジュ法・問題組み立て・制約勾配・求解レポート・再計画のテスト
"""

import tempfile
import time
from pathlib import Path
from unittest.mock import Mock, patch

import numpy as np
import pytest
import yaml

from desk_mm.backend.alm import AlmEvaluation, AlmState, ScalarBoundProblem, phr_penalty, solve_alm
from desk_mm.backend.evaluate import evaluate
from desk_mm.backend.optimizer import BackendOptimizer, TrajectoryObjective, save_solve_report
from desk_mm.backend.planner import PlanResult, TrajectoryPlanner, planned_tasks, splice_boundary
from desk_mm.backend.problem import DecisionLayout, assemble
from desk_mm.core.settings import AlmSettings, OptimizerSettings, ToolkitSettings
from desk_mm.exceptions import OptimizationError, ParameterError, SearchFailure
from desk_mm.frontend.arm_search import WholeBodyPath
from desk_mm.frontend.tasks import TaskSpec, discretize_tasks
from desk_mm.geometry.se3 import RigidPose
from desk_mm.robot.kinematics import fk_frame
from desk_mm.robot.state import WholeBodyState

SMOOTH_KINDS = ("task_position", "joint_position", "joint_velocity", "joint_acceleration",
                "min_base_velocity", "self_collision")


class _EqualityProblem:
    """min x² + y² s.t. x + y = 1"""

    def __init__(self):
        self.x0 = np.array([2.0, -1.0])

    @property
    def bounds(self):
        return None

    def evaluate(self, x):
        return AlmEvaluation(float(x @ x), 2.0 * x, np.array([x[0] + x[1] - 1.0]), np.zeros(0),
                             np.ones(1), np.zeros(0))

    def constraint_vjp(self, x, eq_coef, ineq_coef):
        return float(eq_coef[0]) * np.ones(2)


def _pick_path(desc):
    """x方向に進みながら3番目の経由点で把持するウォームスタート"""
    arm = np.array([0.2, -0.3, 0.1])
    states = [WholeBodyState([0.0, 0.0, 0.0], arm), WholeBodyState([0.3, 0.0, 0.0], arm),
              WholeBodyState([0.6, 0.0, 0.0], arm), WholeBodyState([0.9, 0.0, 0.0], arm)]
    target = fk_frame(desc, states[2])
    tasks = [TaskSpec("pick", "pick", target, (RigidPose.identity(),))]
    keypoints = discretize_tasks(tasks, 0.5)
    return WholeBodyPath(states, [2], [(2, 2)], [0], keypoints), tasks


class TestPhrPenalty:
    """PHRペナルティのテスト"""

    def test_equality_terms(self):
        """等式の値と係数"""
        ev = AlmEvaluation(0.0, np.zeros(1), np.array([0.5]), np.zeros(0), np.array([2.0]), np.zeros(0))
        value, eq_coef, _ = phr_penalty(ev, AlmState(np.array([1.0]), np.zeros(0), 2.0))
        assert value == pytest.approx(1.5)
        np.testing.assert_allclose(eq_coef, [4.0])

    def test_inequality_terms(self):
        """満たされた不等式は寄与0、違反側は二乗項"""
        ev = AlmEvaluation(0.0, np.zeros(1), np.zeros(0), np.array([-1.0, 0.5]), np.zeros(0), np.ones(2))
        value, _, ineq_coef = phr_penalty(ev, AlmState(np.zeros(0), np.array([0.0, 1.0]), 2.0))
        assert value == pytest.approx(0.75)
        np.testing.assert_allclose(ineq_coef, [0.0, 2.0])

    def test_multiplier_update(self):
        """μ は非負に射影される"""
        state = AlmState(np.zeros(1), np.array([0.5]), 1.0)
        state.update(AlmEvaluation(0.0, np.zeros(1), np.array([0.2]), np.array([-2.0]), np.ones(1), np.ones(1)))
        assert state.lam[0] == pytest.approx(0.2)
        assert state.mu[0] == 0.0

    def test_invalid_rho(self):
        """非正の ρ はエラー"""
        with pytest.raises(OptimizationError):
            AlmState(np.zeros(0), np.zeros(0), 0.0)


class TestSolveAlm:
    """ALM外側ループのテスト"""

    def setup_method(self):
        self.settings = AlmSettings(eps_cons=1e-6, eps_grad=1e-8)

    def test_bound_constraint(self):
        """x ≥ 1 の下で (x − 0)² を最小化すると x = 1"""
        result = solve_alm(ScalarBoundProblem(), self.settings)
        assert result.converged and result.feasible
        assert result.x[0] == pytest.approx(1.0, abs=1e-5)
        assert result.state.mu[0] == pytest.approx(2.0, abs=1e-2)

    def test_equality_constraint(self):
        """等式制約付き二次計画の解と乗数"""
        result = solve_alm(_EqualityProblem(), self.settings)
        assert result.converged
        np.testing.assert_allclose(result.x, [0.5, 0.5], atol=1e-5)
        assert result.state.lam[0] == pytest.approx(-1.0, abs=1e-3)
        assert result.state.rho > self.settings.rho_init

    def test_inactive_constraint(self):
        """非活性な不等式では無制約最適解"""
        result = solve_alm(ScalarBoundProblem(lower=-1.0, target=0.5), self.settings)
        assert result.x[0] == pytest.approx(0.5, abs=1e-6)
        assert result.state.mu[0] == 0.0

    def test_deadline(self):
        """期限切れなら最良点を返して打ち切り"""
        result = solve_alm(_EqualityProblem(), self.settings, deadline=time.perf_counter() - 1.0)
        assert result.timed_out
        assert not result.converged
        assert result.outer_iterations == 1


class TestProblemAssembly:
    """最適化問題の組み立てのテスト"""

    def test_layout(self):
        """決定変数の配置"""
        layout = DecisionLayout(segments=4, dim=5, perception=2)
        assert layout.waypoints == slice(0, 15)
        assert layout.free_durations == slice(15, 19)
        assert layout.final == slice(19, 24)
        assert layout.perception_durations == slice(24, 26)
        assert layout.size == 26

    def test_terms_and_initial_point(self, planar3):
        """既定の制約種別とウォームスタートの経由点"""
        path, tasks = _pick_path(planar3)
        problem = assemble(path, tasks, None, planar3)
        assert problem.layout.segments == 3
        assert problem.count("task_position") == 1
        assert problem.count("instant_task_velocity") == 1
        assert problem.count("esi_pre") == 2
        assert problem.count("env_collision") == 0
        traj, Tp, _ = problem.decode(problem.x0)
        assert len(Tp) == 0
        np.testing.assert_allclose(traj.durations, [0.5, 0.5, 0.5])
        np.testing.assert_allclose(traj.eval(1.0), path.states[2].configuration(), atol=1e-12)

    def test_encode_decode(self, planar3):
        """encode した値が decode で戻る"""
        path, tasks = _pick_path(planar3)
        problem = assemble(path, tasks, None, planar3)
        waypoints = np.array([s.configuration() for s in path.states])
        z = problem.encode(waypoints[1:3], [0.4, 0.7, 1.1], waypoints[3], [])
        traj, _, _ = problem.decode(z)
        np.testing.assert_allclose(traj.durations, [0.4, 0.7, 1.1], atol=1e-12)
        np.testing.assert_allclose(traj.eval(traj.total_duration), waypoints[3], atol=1e-12)

    def test_mismatch_rejected(self, planar3, spatial6):
        """ロボット次元・タスク数の不整合はエラー"""
        path, tasks = _pick_path(planar3)
        with pytest.raises(ParameterError):
            assemble(path, tasks, None, spatial6)
        with pytest.raises(ParameterError):
            assemble(path, tasks + tasks, None, planar3)
        with pytest.raises(ParameterError):
            assemble(path, tasks, None, planar3, durations=[0.5, 0.0, 0.5])


class TestConstraintGradients:
    """制約勾配と目的関数勾配のテスト"""

    def setup_method(self):
        self.rng = np.random.default_rng(0)

    def _problem(self, desc):
        path, tasks = _pick_path(desc)
        problem = assemble(path, tasks, None, desc, settings=OptimizerSettings(samples_per_segment=4))
        z = problem.x0 + 0.02 * self.rng.normal(size=problem.layout.size)
        return problem, z

    def test_cost_gradient(self, planar3, numeric_gradient):
        """目的関数勾配が中心差分と一致"""
        problem, z = self._problem(planar3)
        analytic = evaluate(problem, z).gradient
        fd = numeric_gradient(lambda x: evaluate(problem, x).cost, z)
        np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-4 * max(1.0, np.max(np.abs(fd))))

    def test_sample_gradients(self, planar3):
        """滑らかな制約種別のサンプル勾配が中心差分と一致"""
        problem, z = self._problem(planar3)
        base = evaluate(problem, z, with_gradients=True)
        indices = [k for k, s in enumerate(base.samples) if s.kind in SMOOTH_KINDS]
        assert indices
        eps = 1e-6
        fd = np.zeros((len(indices), len(z)))
        for n in range(len(z)):
            step = np.zeros_like(z)
            step[n] = eps
            plus = evaluate(problem, z + step).samples
            minus = evaluate(problem, z - step).samples
            for row, k in enumerate(indices):
                fd[row, n] = (plus[k].value - minus[k].value) / (2.0 * eps)
        for row, k in enumerate(indices):
            scale = max(1.0, float(np.max(np.abs(fd[row]))))
            np.testing.assert_allclose(base.samples[k].gradient, fd[row], rtol=1e-4, atol=1e-4 * scale,
                                       err_msg=base.samples[k].kind)

    def test_objective_caches_evaluation(self, planar3):
        """同じ点の評価と随伴積は再計算しない"""
        problem, z = self._problem(planar3)
        objective = TrajectoryObjective(problem)
        ev = objective.evaluate(z)
        objective.constraint_vjp(z, np.zeros(len(ev.eq)), np.zeros(len(ev.ineq)))
        assert objective.evaluations == 1


class TestBackendOptimizer:
    """求解器とレポートのテスト"""

    def test_report_fields(self, planar3):
        """短い反復でもレポートは揃う"""
        path, tasks = _pick_path(planar3)
        problem = assemble(path, tasks, None, planar3, settings=OptimizerSettings(samples_per_segment=4))
        optimizer = BackendOptimizer(AlmSettings(max_outer=2, max_inner=15))
        traj, report = optimizer.solve(problem)
        assert report.status in ("converged", "feasible", "infeasible", "timeout")
        assert report.segments == 3
        assert len(report.durations) == 3
        assert report.total_duration == pytest.approx(traj.total_duration)
        assert "task_position" in report.validation_violations
        assert report.solve_ms > 0.0

    def test_save_report(self, planar3):
        """レポートのYAML保存"""
        path, tasks = _pick_path(planar3)
        problem = assemble(path, tasks, None, planar3, settings=OptimizerSettings(samples_per_segment=4))
        _, report = BackendOptimizer(AlmSettings(max_outer=1, max_inner=5)).solve(problem, validate=False)
        with tempfile.TemporaryDirectory() as temp_dir:
            out = save_solve_report(report, Path(temp_dir) / "report.yaml")
            with open(out, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f)
        assert data["version"] == "1.0"
        assert data["segments"] == 3
        assert data["validation_violations"] == {}


class TestPlanHelpers:
    """計画結果の補助関数のテスト"""

    def test_planned_task_windows(self, planar3):
        """タスク時刻とESI窓"""
        path, tasks = _pick_path(planar3)
        problem = assemble(path, tasks, None, planar3)
        traj, _, _ = problem.decode(problem.x0)
        planned = planned_tasks(problem, traj, time_origin=2.0)
        assert len(planned) == 1
        assert planned[0].t_start == pytest.approx(3.0)
        assert planned[0].pre_window == pytest.approx(problem.settings.alpha_m * 0.5)
        assert planned[0].critical(2.9)
        assert not planned[0].critical(2.0)

    def test_splice_boundary(self, planar3):
        """接続点の位置・速度・加速度を引き継ぐ"""
        path, tasks = _pick_path(planar3)
        problem = assemble(path, tasks, None, planar3)
        traj, _, _ = problem.decode(problem.x0)
        boundary = splice_boundary(traj, 0.7)
        np.testing.assert_allclose(boundary.position, traj.eval(0.7))
        np.testing.assert_allclose(boundary.derivatives[0], traj.eval(0.7, 1))
        np.testing.assert_allclose(boundary.derivatives[1], traj.eval(0.7, 2))


class TestReplan:
    """実行中の軌道の再計画のテスト"""

    def setup_method(self):
        self.settings = ToolkitSettings()

    def _planner(self, desc, feasible=True, solve_error=None):
        planner = TrajectoryPlanner(desc, Mock(base_resolution=0.05), self.settings)
        planner.cmz_ellipses = Mock(return_value={})
        report = Mock(feasible=feasible, status="feasible" if feasible else "infeasible",
                      max_violation=0.0 if feasible else 0.3)
        if solve_error is not None:
            planner.optimizer.solve = Mock(side_effect=solve_error)
        else:
            planner.optimizer.solve = Mock(side_effect=lambda problem, deadline: (problem.decode(problem.x0)[0],
                                                                                   report))
        return planner

    def _previous(self, desc):
        path, tasks = _pick_path(desc)
        problem = assemble(path, tasks, None, desc)
        traj, _, _ = problem.decode(problem.x0)
        return PlanResult(traj, 0.0, tasks, planned_tasks(problem, traj, 0.0), None, problem, path), tasks

    def _reachable(self, inside=True):
        return patch("desk_mm.backend.planner.keypoint_ellipse",
                     return_value=Mock(contains=Mock(return_value=inside)))

    def test_skipped_inside_critical_phase(self, planar3):
        """把持の拡張区間 [0.75, 1.25] の中では再計画しない"""
        planner = self._planner(planar3)
        previous, tasks = self._previous(planar3)
        result = planner.replan(previous, tasks, 1.0, None)
        assert result.status == "skipped"
        assert result.trajectory is previous.trajectory
        planner.optimizer.solve.assert_not_called()

    def test_skipped_near_end(self, planar3):
        """残りが接続の最小区間以下なら再計画しない"""
        planner = self._planner(planar3)
        previous, tasks = self._previous(planar3)
        result = planner.replan(previous, tasks, 1.45, None)
        assert result.status == "skipped"
        assert result.budget_ratio is None

    def test_replanned_from_shifted_warm_start(self, planar3):
        """キーポイントが到達楕円内なら前回軌道を切り出して解き直す"""
        planner = self._planner(planar3)
        planner.frontend.plan = Mock()
        previous, tasks = self._previous(planar3)
        with self._reachable():
            result = planner.replan(previous, tasks, 0.2, None, budget=5.0)
        assert result.status == "replanned"
        assert not result.frontend_rerun
        planner.frontend.plan.assert_not_called()
        assert result.time_origin == 0.2
        assert result.budget_ratio is not None and result.budget_ratio > 0.0
        # 接続点の位置を引き継ぐ
        np.testing.assert_allclose(result.trajectory.eval(0.0), previous.trajectory.eval(0.2), atol=1e-9)
        assert result.planned[0].t_start == pytest.approx(1.0)

    def test_frontend_rerun_when_keypoint_unreachable(self, planar3):
        """キーポイントが到達楕円を外れたらフロントエンドを再実行"""
        planner = self._planner(planar3)
        previous, tasks = self._previous(planar3)
        planner.frontend.plan = Mock(return_value=previous.warm_start)
        with self._reachable(inside=False):
            result = planner.replan(previous, tasks, 0.2, None, budget=5.0)
        assert result.status == "replanned"
        assert result.frontend_rerun
        planner.frontend.plan.assert_called_once()
        start = planner.frontend.plan.call_args[0][0]
        np.testing.assert_allclose(start.base[:2], previous.trajectory.eval(0.2)[:2], atol=1e-9)

    def test_retained_on_solver_error(self, planar3):
        """求解の例外は記録して前回の軌道を返す"""
        planner = self._planner(planar3, solve_error=OptimizationError("Solver diverged", "nan cost"))
        previous, tasks = self._previous(planar3)
        with self._reachable():
            result = planner.replan(previous, tasks, 0.2, None, budget=5.0)
        assert result.status == "retained"
        assert result.trajectory is previous.trajectory
        stats = planner.exception_handler.get_error_statistics()
        assert stats["total_errors"] == 1
        assert stats["by_type"] == {"OptimizationError": 1}

    def test_retained_on_frontend_failure(self, planar3):
        """フロントエンドの失敗でも前回の軌道を返す"""
        planner = self._planner(planar3)
        previous, tasks = self._previous(planar3)
        planner.frontend.plan = Mock(side_effect=SearchFailure("No path", "lattice exhausted"))
        with self._reachable(inside=False):
            result = planner.replan(previous, tasks, 0.2, None)
        assert result.status == "retained"
        planner.optimizer.solve.assert_not_called()

    def test_retained_when_infeasible(self, planar3):
        """ε_cons を満たさない解は採用しない"""
        planner = self._planner(planar3, feasible=False)
        previous, tasks = self._previous(planar3)
        with self._reachable():
            result = planner.replan(previous, tasks, 0.2, None, budget=5.0)
        assert result.status == "retained"
        assert result.trajectory is previous.trajectory
        assert result.budget_ratio is not None
        assert planner.exception_handler.get_error_statistics()["total_errors"] == 1

    def test_retained_over_budget(self, planar3):
        """予算を超えた解は採用しない"""
        planner = self._planner(planar3)
        previous, tasks = self._previous(planar3)
        with self._reachable():
            result = planner.replan(previous, tasks, 0.2, None, budget=1e-6)
        assert result.status == "retained"
        assert result.trajectory is previous.trajectory
        assert result.budget_ratio is not None and result.budget_ratio > 0.0
        recent = planner.exception_handler.get_error_statistics()["recent_errors"]
        assert "budget exceeded" in recent[-1]["message"]
