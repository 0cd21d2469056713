"""
Desk Mobile Manipulation Toolkit - Simulation Tests
シミュレータ・姿勢オラクル・評価指標・シナリオ・トレース・検査のテスト
"""

import json
import math
import tempfile
from pathlib import Path
from unittest.mock import Mock, patch

import numpy as np
import pytest
import yaml

from desk_mm.backend.planner import PlannedTask
from desk_mm.core.settings import OptimizerSettings, OracleSettings, SimSettings, ToolkitSettings
from desk_mm.exceptions import ScenarioError
from desk_mm.frontend.tasks import PlaceRegion, TaskSpec
from desk_mm.geometry.se3 import RigidPose
from desk_mm.robot.kinematics import fk_frame
from desk_mm.robot.state import WholeBodyState
from desk_mm.sim.checks import (check_run, check_scenario_roundtrip, check_smooth_goldens, check_spline_knots,
                                check_warping, run_checks)
from desk_mm.sim.metrics import (IdealTimeEstimator, MissionResult, judge_mission, msct, operation_time,
                                 placement_check, ssct, tilt_angle)
from desk_mm.sim.oracle import PoseOracle, target_visible
from desk_mm.sim.runner import (EsiWindow, HeldRecord, ReplanRecord, RunResult, ScenarioRunner, ablation_switches,
                                export_trace_csv, load_trace, save_trace)
from desk_mm.sim.scenario import (build_scenario, displaced_pose, dump_scenario, load_scenario, parse_scenario,
                                  preset_scenario, save_scenario)
from desk_mm.sim.simulator import KinematicSimulator, VelocityCommand, step_sim
from desk_mm.world.obstacles import DynamicObstacle

# 光軸 (z) を +x に向けたカメラ
FORWARD_CAMERA = RigidPose.from_xyz_rpy([0.0, 0.0, 0.0], [0.0, math.pi / 2, 0.0])
BACKWARD_CAMERA = RigidPose.from_xyz_rpy([0.0, 0.0, 0.0], [0.0, -math.pi / 2, 0.0])


def _mission(index, success, cycle, ideal):
    return MissionResult(index, [f"task{index}"], success, cycle, ideal, msct(success, ideal, cycle))


def _trace_row(t, joints=3):
    return {"t": t, "x": 0.1 * t, "y": 0.0, "psi": 0.0, "q": [0.0] * joints,
            "ee": [0.5, 0.0, 0.4, 0.0, 0.0, 0.0, 1.0], "v": 0.1, "omega": 0.0, "sigma_s": 1.0}


def _pick_task():
    """(1.5, 0, 0.45) の物体を真上から掴む pick (手先 z は下向き)"""
    return TaskSpec(name="pick_a", kind="pick", object_pose=RigidPose.from_xyz_rpy([1.5, 0.0, 0.45]),
                    grasps=(RigidPose.from_xyz_rpy([0.0, 0.0, 0.0], [math.pi, 0.0, 0.0]),))


def _approach_result(offset):
    """z = 0.6 から 0.45 へ真下に下りる手先 (x を offset だけずらす) と pick_a の接近窓 [0, 0.2)"""
    trace = []
    for k in range(11):
        row = _trace_row(0.02 * k)
        row["ee"] = [1.5 + offset, 0.0, 0.6 - 0.015 * k, 0.0, 0.0, 0.0, 1.0]
        trace.append(row)
    window = EsiWindow("pick_a", "pre", 0.0, 0.2, [1.5, 0.0, 0.45], [0.0, 0.0, 1.0])
    return RunResult("simple", 0, 0.0, "completed", [_mission(0, True, 20.0, 10.0)], 0.5, 20.0, 25.0,
                     trace=trace, esi_windows=[window])


def _held_result(positions, held_objects):
    """物体 cup を持って positions を順に通るトレース (0.02 s 刻み)"""
    trace = []
    for k, xyz in enumerate(positions):
        row = _trace_row(0.02 * k)
        row["held"] = "cup"
        row["held_pose"] = list(xyz) + [0.0, 0.0, 0.0, 1.0]
        trace.append(row)
    return RunResult("simple", 0, 0.0, "completed", [_mission(0, True, 20.0, 10.0)], 0.5, 20.0, 25.0,
                     trace=trace, held_objects=held_objects)


class TestStepSim:
    """積分のテスト"""

    def test_straight_line(self, planar3):
        """ω = 0 で直進"""
        state = WholeBodyState(np.zeros(3), np.zeros(3))
        out = step_sim(state, VelocityCommand(0.5, 0.0, np.zeros(3)), 1.0, planar3)
        np.testing.assert_allclose(out.base, [0.5, 0.0, 0.0], atol=1e-12)

    def test_quarter_circle(self):
        """v = ω = 1 で π/2 秒進むと (1, 1, π/2)"""
        state = WholeBodyState(np.zeros(3), np.zeros(3))
        out = step_sim(state, VelocityCommand(1.0, 1.0, np.zeros(3)), math.pi / 2)
        np.testing.assert_allclose(out.base, [1.0, 1.0, math.pi / 2], atol=1e-9)

    def test_joint_limits_clip(self, planar3):
        """関節速度の積分は関節制限でクリップ"""
        state = WholeBodyState(np.zeros(3), np.zeros(3))
        out = step_sim(state, VelocityCommand(0.0, 0.0, np.full(3, 10.0)), 1.0, planar3)
        np.testing.assert_allclose(out.arm, planar3.q_max)
        free = step_sim(state, VelocityCommand(0.0, 0.0, np.full(3, 0.1)), 1.0)
        np.testing.assert_allclose(free.arm, 0.1, atol=1e-12)


class TestKinematicSimulator:
    """閉ループ用シミュレータのテスト"""

    def setup_method(self):
        self.state = WholeBodyState([0.0, 0.0, 0.0], [0.3, -0.4, 0.2])

    def test_grasp_and_carry(self, planar3):
        """把持成功後の物体は手先に追従する"""
        cup = fk_frame(planar3, self.state, "ee")
        sim = KinematicSimulator(planar3, self.state, {"cup": cup})
        ok, pos_err, rot_err = sim.grasp("cup", RigidPose.identity())
        assert ok
        assert pos_err == pytest.approx(0.0, abs=1e-12)
        sim.step(VelocityCommand(0.5, 0.0, np.zeros(3)), 1.0)
        assert sim.t == pytest.approx(1.0)
        pos, rot = sim.objects["cup"].distance_to(sim.ee_pose())
        assert pos == pytest.approx(0.0, abs=1e-9)
        assert rot == pytest.approx(0.0, abs=1e-6)

    def test_grasp_out_of_tolerance(self, planar3):
        """許容外なら固定しない"""
        cup = fk_frame(planar3, self.state, "ee").translated([0.1, 0.0, 0.0])
        sim = KinematicSimulator(planar3, self.state, {"cup": cup})
        ok, pos_err, _ = sim.grasp("cup", RigidPose.identity())
        assert not ok
        assert pos_err == pytest.approx(0.1)
        assert sim.attached is None
        assert sim.release() is None

    def test_release_and_drop(self, planar3):
        """落下高さを指定すると z だけ置き換える"""
        cup = fk_frame(planar3, self.state, "ee")
        sim = KinematicSimulator(planar3, self.state, {"cup": cup})
        sim.grasp("cup", RigidPose.identity())
        name, pose = sim.release(drop_height=0.05)
        assert name == "cup"
        assert pose.translation[2] == pytest.approx(0.05)
        np.testing.assert_allclose(pose.translation[:2], cup.translation[:2], atol=1e-12)
        assert sim.attached is None

    def test_collisions(self, planar3, table_world):
        """静的環境と動的障害物の衝突"""
        inside = KinematicSimulator(planar3, WholeBodyState([1.5, 0.0, 0.0], np.zeros(3)), {},
                                    world=table_world)
        assert inside.collision() is not None
        clear = KinematicSimulator(planar3, WholeBodyState([0.0, 0.0, 0.0], np.zeros(3)), {},
                                   world=table_world)
        assert clear.collision() is None
        crowded = KinematicSimulator(planar3, WholeBodyState([0.0, 0.0, 0.0], np.zeros(3)), {},
                                     obstacles=[DynamicObstacle([0.2, 0.0], [0.0, 0.0], 0.1)])
        assert "dynamic obstacle" in crowded.collision()

    def test_command_noise_is_seeded(self, planar3):
        """同じ乱数種なら同じ結果"""
        settings = SimSettings(command_noise=0.05)
        runs = []
        for _ in range(2):
            sim = KinematicSimulator(planar3, self.state, {}, settings=settings, seed=7)
            for _ in range(5):
                sim.step(VelocityCommand(0.2, 0.1, np.zeros(3)), 0.02)
            runs.append(sim.state.base.copy())
        np.testing.assert_array_equal(runs[0], runs[1])


class TestPoseOracle:
    """姿勢オラクルのテスト"""

    def setup_method(self):
        self.visibility = OptimizerSettings()
        self.target = RigidPose.from_xyz_rpy([1.0, 0.0, 0.0])

    def test_visibility(self, table_world):
        """視野・距離・遮蔽"""
        assert target_visible(FORWARD_CAMERA, self.target.translation, self.visibility)
        assert not target_visible(BACKWARD_CAMERA, self.target.translation, self.visibility)
        assert not target_visible(FORWARD_CAMERA, np.array([3.0, 0.0, 0.0]), self.visibility)
        # 机越しの目標は遮蔽される
        camera = RigidPose.from_xyz_rpy([0.8, 0.0, 0.2], [0.0, math.pi / 2, 0.0])
        assert not target_visible(camera, np.array([2.2, 0.0, 0.2]), self.visibility, table_world)

    def test_initial_delay(self):
        """t = 2 から可視なら初回推定は t = 3"""
        settings = OracleSettings(rate=5.0, init_delay=1.0, sigma_pos=0.0, sigma_rot=0.0)
        oracle = PoseOracle({"cup": self.target}, settings, self.visibility)
        first = None
        for k in range(40):
            t = k / 10
            camera = FORWARD_CAMERA if t >= 2.0 - 1e-9 else BACKWARD_CAMERA
            estimate = oracle.observe("cup", camera, t)
            if estimate is not None and first is None:
                first = t
        assert first == pytest.approx(3.0)
        record = oracle.log["cup"]
        assert record.first_visible == pytest.approx(2.0)
        assert record.first_estimate == pytest.approx(3.0)
        pos, rot = oracle.observe("cup", FORWARD_CAMERA, 4.0).distance_to(self.target)
        assert pos == pytest.approx(0.0) and rot == pytest.approx(0.0, abs=1e-7)

    def test_update_rate(self):
        """可視の間は rate [Hz] でしか更新しない"""
        settings = OracleSettings(rate=5.0, init_delay=0.0)
        oracle = PoseOracle({"cup": self.target}, settings, self.visibility, seed=1)
        for k in range(51):
            oracle.observe("cup", FORWARD_CAMERA, k / 50)
        assert oracle.log["cup"].estimates == 6

    def test_estimate_held_while_hidden(self):
        """見えなくなっても最後の推定を返す"""
        settings = OracleSettings(init_delay=0.0, sigma_pos=0.0, sigma_rot=0.0)
        oracle = PoseOracle({"cup": self.target}, settings, self.visibility)
        seen = oracle.observe("cup", FORWARD_CAMERA, 0.0)
        oracle.set_true_pose("cup", self.target.translated([0.2, 0.0, 0.0]))
        held = oracle.observe("cup", BACKWARD_CAMERA, 1.0)
        assert held is seen

    def test_never_visible_and_manipulation_mark(self):
        """一度も見えなかったタスクと操作開始時点の可視時間"""
        oracle = PoseOracle({"cup": self.target, "box": self.target}, OracleSettings(), self.visibility)
        for k in range(11):
            oracle.observe("cup", FORWARD_CAMERA, k / 10)
            oracle.observe("box", BACKWARD_CAMERA, k / 10)
        oracle.mark_manipulation("cup")
        oracle.observe("cup", FORWARD_CAMERA, 2.0)
        oracle.mark_manipulation("cup")
        assert oracle.never_visible() == ["box"]
        assert oracle.log["cup"].visible_before_manipulation == pytest.approx(1.0)


class TestMetrics:
    """評価指標のテスト"""

    def setup_method(self):
        self.settings = SimSettings()
        self.region = PlaceRegion((1.0, 0.0, 0.45), (0.1, 0.1, 0.1))
        self.place = TaskSpec(name="place", kind="place", object_pose=RigidPose.from_xyz_rpy([1.0, 0.0, 0.45]),
                              grasps=(RigidPose.identity(),), place_region=self.region)

    def test_msct(self):
        """s = 1, T = 10, C = 20 で 0.5"""
        assert msct(True, 10.0, 20.0) == pytest.approx(0.5)
        assert msct(True, 10.0, 5.0) == pytest.approx(1.0)
        assert msct(False, 10.0, 20.0) == 0.0
        assert msct(True, 10.0, None) == 0.0

    def test_ssct_and_operation_time(self):
        """平均と完了ミッションの和"""
        results = [_mission(0, True, 20.0, 10.0), _mission(1, False, None, 8.0), _mission(2, True, 6.0, 6.0)]
        assert ssct(results) == pytest.approx(0.5)
        assert ssct([]) == 0.0
        assert operation_time(results) == pytest.approx(26.0)

    def test_tilt_angle(self):
        """ロールのみの傾き"""
        assert tilt_angle(RigidPose.from_xyz_rpy([0.0, 0.0, 0.0], [0.3, 0.0, 0.0])) == pytest.approx(0.3)
        assert tilt_angle(RigidPose.from_xyz_rpy([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])) == pytest.approx(0.0)

    def test_place_judgement(self):
        """領域内かつ直立なら成功、傾き・領域外は失敗タグ"""
        ok, error, _, tag = placement_check(self.place, RigidPose.from_xyz_rpy([1.05, 0.0, 0.45]), self.settings)
        assert ok and tag is None
        assert error == pytest.approx(0.05)
        tilted = RigidPose.from_xyz_rpy([1.0, 0.0, 0.45], [math.radians(60.0), 0.0, 0.0])
        assert placement_check(self.place, tilted, self.settings)[3] == "tilted"
        outside = RigidPose.from_xyz_rpy([1.3, 0.0, 0.45])
        assert placement_check(self.place, outside, self.settings)[3] == "place_missed"

    def test_drop_judgement(self):
        """落とし先は水平距離のみで判定"""
        basket = PlaceRegion((0.2, -1.3, 0.1), (0.15, 0.15, 0.1))
        drop = TaskSpec(name="drop", kind="drop", object_pose=RigidPose.from_xyz_rpy([0.2, -1.3, 0.5]),
                        grasps=(RigidPose.identity(),), place_region=basket)
        assert placement_check(drop, RigidPose.from_xyz_rpy([0.25, -1.3, 0.0], [1.2, 0.0, 0.0]),
                               self.settings)[0]
        assert placement_check(drop, RigidPose.from_xyz_rpy([0.6, -1.3, 0.0]), self.settings)[3] == "drop_missed"

    def test_judge_mission(self):
        """開放なし・把持失敗・成功"""
        final = RigidPose.from_xyz_rpy([1.0, 0.0, 0.45])
        missing = judge_mission(0, [self.place], 1.0, None, True, final, 5.0, self.settings)
        assert not missing.success and missing.failure == "no_release" and missing.msct == 0.0
        dropped = judge_mission(0, [self.place], 1.0, 11.0, False, final, 5.0, self.settings)
        assert dropped.failure == "grasp_failed"
        done = judge_mission(0, [self.place], 1.0, 11.0, True, final, 5.0, self.settings)
        assert done.success
        assert done.cycle_time == pytest.approx(10.0)
        assert done.msct == pytest.approx(0.5)


class TestIdealTime:
    """理想時間推定のテスト"""

    def test_open_floor(self):
        """障害物が無ければ直線距離から到達半径を引いた長さ"""
        estimator = IdealTimeEstimator(None, 0.25, 0.5)
        length, arrival = estimator.leg(np.zeros(2), np.array([3.0, 0.0]))
        assert length == pytest.approx(2.5, abs=0.11)
        assert np.linalg.norm(arrival - [3.0, 0.0]) <= 0.5 + 1e-9
        total, _ = estimator.mission_time(np.zeros(2), [np.array([3.0, 0.0, 0.4])])
        assert total == pytest.approx(length / SimSettings().max_base_speed)

    def test_already_in_reach(self):
        """到達半径内なら移動不要"""
        estimator = IdealTimeEstimator(None, 0.25, 0.5)
        length, arrival = estimator.leg(np.array([1.0, 1.0]), np.array([1.2, 1.0]))
        assert length == 0.0
        np.testing.assert_allclose(arrival, [1.0, 1.0])

    def test_table_blocks_cells(self, table_world):
        """机の下はベースが通れない"""
        estimator = IdealTimeEstimator(table_world, 0.25, 0.5)
        res = estimator.settings.ideal_grid_resolution
        i, j = np.round((np.array([1.5, 0.0]) - estimator.low) / res).astype(int)
        assert not estimator.free[i, j]


class TestScenario:
    """シナリオファイルのテスト"""

    def test_preset_roundtrip(self):
        """parse → dump → parse で同一"""
        for preset in ("simple", "office-like"):
            model = load_scenario(preset)
            assert parse_scenario(yaml.safe_load(dump_scenario(model))) == model

    def test_save_and_load(self):
        """ファイル経由でも同一"""
        model = preset_scenario("simple", d_sigma=0.1, seed=3)
        assert model.displacement.d_sigma == 0.1 and model.displacement.seed == 3
        with tempfile.TemporaryDirectory() as temp_dir:
            path = save_scenario(model, Path(temp_dir) / "nested" / "scenario.yaml")
            assert load_scenario(path) == model

    def test_unknown_inputs(self):
        """未知のプリセット・存在しないファイル・壊れたYAML"""
        with pytest.raises(ScenarioError):
            preset_scenario("warehouse")
        with pytest.raises(ScenarioError):
            load_scenario("/nonexistent/scenario.yaml")
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "bad.yaml"
            path.write_text("name: [unclosed", encoding="utf-8")
            with pytest.raises(ScenarioError):
                load_scenario(path)

    def test_schema_errors(self):
        """タスク名の重複と後方への結合はエラー"""
        data = load_scenario("simple").model_dump(mode="json")
        duplicated = json.loads(json.dumps(data))
        duplicated["tasks"][1]["name"] = duplicated["tasks"][0]["name"]
        with pytest.raises(ScenarioError):
            parse_scenario(duplicated)
        forward = json.loads(json.dumps(data))
        forward["tasks"][0]["couple_to"] = forward["tasks"][1]["name"]
        with pytest.raises(ScenarioError):
            parse_scenario(forward)
        data["version"] = "2.0"
        with pytest.raises(ScenarioError):
            parse_scenario(data)

    def test_build_displaces_perception_tasks(self):
        """知覚タスクの真値だけが d_σ ずれる"""
        scenario = build_scenario(preset_scenario("simple", d_sigma=0.1, seed=5))
        assert scenario.missions == [[0, 1], [2, 3]]
        assert scenario.tasks[1].couple_to == 0
        for task in scenario.tasks:
            shift = scenario.true_poses[task.name].translation - task.object_pose.translation
            expected = 0.1 if task.perception else 0.0
            assert np.linalg.norm(shift[:2]) == pytest.approx(expected, abs=1e-12)
            assert shift[2] == pytest.approx(0.0, abs=1e-12)
        assert scenario.task_index("drop_b") == 3

    def test_displacement_is_seeded(self):
        """同じ乱数種なら同じ向き"""
        pose = RigidPose.from_xyz_rpy([1.0, 0.0, 0.4])
        a = displaced_pose(pose, 0.05, np.random.default_rng(9))
        b = displaced_pose(pose, 0.05, np.random.default_rng(9))
        np.testing.assert_array_equal(a.translation, b.translation)


class TestTrace:
    """トレース入出力のテスト"""

    def test_save_load_and_csv(self):
        """JSON-lines の読み書きとCSV出力"""
        rows = [_trace_row(0.02 * k) for k in range(5)]
        with tempfile.TemporaryDirectory() as temp_dir:
            path = save_trace(rows, Path(temp_dir) / "trace.jsonl")
            assert load_trace(path) == rows
            csv_path = export_trace_csv(rows, Path(temp_dir) / "plots" / "trace.csv")
            lines = csv_path.read_text(encoding="utf-8").splitlines()
        assert lines[0].split(",")[:7] == ["t", "x", "y", "psi", "q0", "q1", "q2"]
        assert len(lines) == 6

    def test_invalid_trace(self):
        """存在しないファイルと壊れた行"""
        with tempfile.TemporaryDirectory() as temp_dir:
            with pytest.raises(ScenarioError):
                load_trace(Path(temp_dir) / "missing.jsonl")
            path = Path(temp_dir) / "broken.jsonl"
            path.write_text(json.dumps(_trace_row(0.0)) + "\n{not json\n", encoding="utf-8")
            with pytest.raises(ScenarioError):
                load_trace(path)

    def test_run_result_save(self):
        """summary.json と trace.jsonl"""
        result = RunResult("simple", 0, 0.0, "completed", [_mission(0, True, 20.0, 10.0)], 0.5, 20.0, 25.0,
                           trace=[_trace_row(0.0)])
        with tempfile.TemporaryDirectory() as temp_dir:
            out = result.save(Path(temp_dir) / "run")
            summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
            assert (out / "trace.jsonl").exists()
        assert summary["ssct"] == 0.5
        assert summary["missions"][0]["msct"] == pytest.approx(0.5)
        assert "trace" not in summary


class TestScenarioRunnerReplan:
    """再計画の仮想時刻への反映と接近窓の記録のテスト"""

    def _runner(self, real_time_factor, status="replanned"):
        runner = ScenarioRunner.__new__(ScenarioRunner)
        runner.settings = ToolkitSettings(sim=SimSettings(real_time_factor=real_time_factor, replan_budget=2.0))
        runner.plan = Mock(t_end=10.0)
        runner.world = None
        runner.scenario = Mock(obstacles=[])
        runner.active_window = Mock(return_value=([_pick_task()], None))
        runner.planner = Mock()
        runner.planner.replan.return_value = Mock(status=status, planning_ms=12.0, budget_ratio=0.1,
                                                  frontend_rerun=False)
        runner._pending = None
        runner.replans = []
        return runner

    def test_synchronous_replan_without_delay(self):
        """real_time_factor = 0 なら計算時間に関わらず同じ時刻で有効"""
        runner = self._runner(0.0)
        record = runner.replan(3.0)
        assert record.effective_at == 3.0
        assert runner._pending[0] == 3.0
        assert runner.replans == [record]
        assert record.tasks == ["pick_a"]

    def test_wall_time_charged_to_virtual_clock(self):
        """計算にかかった実時間 × real_time_factor だけ遅れて切り替わる"""
        runner = self._runner(1.0)
        with patch("desk_mm.sim.runner.time.perf_counter", side_effect=[0.0, 0.5]):
            record = runner.replan(3.0)
        assert record.effective_at == pytest.approx(3.5)
        assert runner._pending[0] == pytest.approx(3.5)

    def test_budget_and_retained_plan(self):
        """予算は残り時間で頭打ち、再計画しなかった結果は保留しない"""
        runner = self._runner(0.0, status="retained")
        runner.replan(9.5)
        budget = runner.planner.replan.call_args[0][5]
        assert budget == pytest.approx(0.5)
        assert runner._pending is None
        assert runner.replans[0].status == "retained"

    def test_record_esi_clipped_to_plan_start(self):
        """接近窓は計画の採用時刻より前を含めず、方向は手先 z の逆向き"""
        task = _pick_task()
        runner = ScenarioRunner.__new__(ScenarioRunner)
        runner.plan = Mock()
        runner.plan.task.return_value = PlannedTask(0, task, 0, 2.0, 2.0, 0.5, 0.3)
        runner.estimates = {}
        runner.esi_windows = []
        runner._plan_since = 1.8
        runner._record_esi(task, True, True)
        assert len(runner.esi_windows) == 1
        window = runner.esi_windows[0]
        assert (window.phase, window.start, window.end) == ("pre", 1.8, 2.0)
        np.testing.assert_allclose(window.origin, [1.5, 0.0, 0.45], atol=1e-12)
        np.testing.assert_allclose(window.direction, [0.0, 0.0, 1.0], atol=1e-12)

    def test_record_esi_uses_latest_estimate(self):
        """推定があれば推定姿勢の上に半直線を置く"""
        task = _pick_task()
        runner = ScenarioRunner.__new__(ScenarioRunner)
        runner.plan = Mock()
        runner.plan.task.return_value = PlannedTask(0, task, 0, 2.0, 2.0, 0.5, 0.3)
        runner.estimates = {"pick_a": RigidPose.from_xyz_rpy([1.6, 0.1, 0.45])}
        runner.esi_windows = []
        runner._plan_since = 0.0
        runner._record_esi(task, True, False)
        np.testing.assert_allclose(runner.esi_windows[0].origin, [1.6, 0.1, 0.45], atol=1e-12)
        assert runner.esi_windows[0].start == pytest.approx(1.5)


class TestChecks:
    """不変条件スイートのテスト"""

    def test_static_checks(self, planar3):
        """静的検査はすべて通る"""
        assert check_smooth_goldens().passed
        assert check_spline_knots(planar3).passed
        warping = check_warping(planar3)
        assert warping.passed, warping.detail
        assert int(warping.detail.split(" ")[0]) >= 10_000
        assert check_scenario_roundtrip("simple").passed
        assert all(r.passed for r in run_checks(planar3, ["simple"]))

    def test_run_checks(self, settings):
        """実行結果の検査: 予算比が1以下なら失敗"""
        result = RunResult("simple", 0, 0.0, "completed", [_mission(0, True, 20.0, 10.0)], 0.5, 20.0, 25.0)
        assert all(c.passed for c in check_run(result, settings))
        result.replans.append(ReplanRecord(3.0, "ok", ["pick_a"], 800.0, 2.0, False, 3.8))
        checks = {c.name: c for c in check_run(result, settings)}
        assert not checks["replan_budget"].passed
        assert checks["metrics"].passed

    def test_esi_ray_on_ray(self, settings):
        """真上から半直線に沿って下りる手先は合格"""
        checks = {c.name: c for c in check_run(_approach_result(0.0), settings)}
        assert checks["esi_ray"].passed
        # 10区間 × 4点 (窓の終端 t = 0.2 は含まない)
        assert "40 samples" in checks["esi_ray"].detail

    def test_esi_ray_off_ray(self, settings):
        """半直線から 5cm ずれた手先は d_pos = 1cm を超えて失敗"""
        checks = {c.name: c for c in check_run(_approach_result(0.05), settings)}
        assert not checks["esi_ray"].passed
        assert "pick_a pre" in checks["esi_ray"].detail

    def test_ecs_clearance(self, settings, table_world):
        """机の上を運ぶ物体は合格、机にめり込む物体は失敗"""
        far = [0.0, 0.0, 0.5]
        held = {"cup": HeldRecord([[0.0, 0.0, 0.0, 0.03]], [[far + [table_world.value(far)]]])}
        above = _held_result([[1.5, 0.0, 0.6], [1.5, 0.0, 0.55]], held)
        checks = {c.name: c for c in check_run(above, settings, table_world)}
        assert checks["ecs_clearance"].passed
        # 1区間 × 4点 + 終端
        assert "5 samples" in checks["ecs_clearance"].detail

        inside = _held_result([[1.5, 0.0, 0.6], [1.5, 0.0, 0.3]], held)
        checks = {c.name: c for c in check_run(inside, settings, table_world)}
        assert not checks["ecs_clearance"].passed
        assert "cup sphere 0" in checks["ecs_clearance"].detail

    def test_ecs_clearance_elastic_target(self, settings, table_world):
        """接触目標の位置では球が縮むので机面に触れても合格"""
        surface = [1.5, 0.0, 0.42]
        sphere = [[0.0, 0.0, 0.0, 0.03]]
        rows = [surface, surface]
        with_target = {"cup": HeldRecord(sphere, [[surface + [table_world.value(surface)]]])}
        checks = {c.name: c for c in check_run(_held_result(rows, with_target), settings, table_world)}
        assert checks["ecs_clearance"].passed

        rigid = {"cup": HeldRecord(sphere, [[]])}
        checks = {c.name: c for c in check_run(_held_result(rows, rigid), settings, table_world)}
        assert not checks["ecs_clearance"].passed

    def test_ecs_clearance_needs_world(self, settings):
        """ESDFを渡さなければ把持物体の検査はしない"""
        held = {"cup": HeldRecord([[0.0, 0.0, 0.0, 0.03]], [[]])}
        names = {c.name for c in check_run(_held_result([[1.5, 0.0, 0.3]] * 2, held), settings)}
        assert "ecs_clearance" not in names
        assert "esi_ray" in names

    def test_trace_checks_follow_ablation(self, table_world):
        """ESI・ECS を無効にした設定では検査しない"""
        settings = ToolkitSettings(optimizer=OptimizerSettings(enable_esi=False, enable_ecs=False))
        held = {"cup": HeldRecord([[0.0, 0.0, 0.0, 0.03]], [[]])}
        names = {c.name for c in check_run(_held_result([[1.5, 0.0, 0.3]] * 2, held), settings, table_world)}
        assert not names & {"esi_ray", "ecs_clearance"}

    def test_safety_records_in_summary(self):
        """接近窓と把持物体の記録は summary に入る"""
        result = _approach_result(0.0)
        result.held_objects["cup"] = HeldRecord([[0.0, 0.0, 0.0, 0.03]], [[[1.5, 0.0, 0.42, 0.02]]])
        summary = result.summary()
        assert summary["esi_windows"][0]["phase"] == "pre"
        assert summary["esi_windows"][0]["direction"] == [0.0, 0.0, 1.0]
        assert summary["held_objects"]["cup"]["targets"][0][0][3] == 0.02

    def test_ablation_switches(self, settings):
        """既定ではすべて有効"""
        switches = ablation_switches(settings)
        assert set(switches) == {"tap", "cmz", "esi", "ecs", "warping"}
        assert all(switches.values())
