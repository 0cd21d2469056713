"""
Desk Mobile Manipulation Toolkit - Invariant Checks
CLI の check で実行する軽量な不変条件スイート
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from ..control.reference import ReferenceTrajectory
from ..control.switching import switch_weights
from ..control.warping import WarpSchedule, WarpWindow, boundary_jumps
from ..core.settings import ToolkitSettings
from ..frontend.tasks import TaskSpec
from ..geometry.se3 import RigidPose, interp_se3
from ..geometry.smooth import SmoothParams, alpha_poly, f_d_ray, f_log, f_s, r_elastic
from ..robot.description import RobotDescription
from ..trajectory.minco import BoundaryCondition, fit_min_effort
from ..world.esdf import EsdfGrid
from .runner import RunResult
from .scenario import dump_scenario, load_scenario, parse_scenario

logger = logging.getLogger(__name__)

# トレース1区間あたりの検査点 (制御周期の4倍)
TRACE_SUBSAMPLES = 4


@dataclass
class CheckResult:
    """検査結果"""

    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _guard(name: str, func: Callable[[], str]) -> CheckResult:
    try:
        return CheckResult(name, True, func())
    except AssertionError as e:
        return CheckResult(name, False, str(e))


def check_smooth_goldens() -> CheckResult:
    """平滑関数の解析値"""
    def run() -> str:
        smooth = SmoothParams(0.01)
        cases = [
            (f_log(-1.0, -1.0, 1.0), 0.0), (f_log(0.0, -1.0, 1.0), 0.5), (f_log(1.0, -1.0, 1.0), 1.0),
            (f_s(0.0, 0.05, smooth), 0.0), (f_s(0.07, 0.05, smooth), 0.05), (f_s(0.03, 0.05, smooth), 0.025),
            (alpha_poly(0.0), 0.0), (alpha_poly(0.5), 0.5), (alpha_poly(1.0), 1.0),
        ]
        worst = max(abs(a - b) for a, b in cases)
        assert worst <= 1e-9, f"max golden error {worst:.3e}"
        return f"{len(cases)} cases, max error {worst:.1e}"
    return _guard("smooth_goldens", run)


def _sample_trajectory(desc: RobotDescription, rng: np.random.Generator):
    mid = 0.5 * (desc.q_min + desc.q_max)
    span = 0.25 * (desc.q_max - desc.q_min)
    points = [np.concatenate([[0.3 * k, 0.1 * k], mid + rng.uniform(-1.0, 1.0, len(mid)) * span])
              for k in range(5)]
    return fit_min_effort(np.array(points[1:-1]), [1.0] * 4, BoundaryCondition.at_rest(points[0]),
                          BoundaryCondition.at_rest(points[-1])), points


def check_spline_knots(desc: RobotDescription, seed: int = 0) -> CheckResult:
    """係数写像の軌道が中間点と端点条件を満たす"""
    def run() -> str:
        traj, points = _sample_trajectory(desc, np.random.default_rng(seed))
        errors = [float(np.max(np.abs(traj.eval(float(t)) - p))) for t, p in zip(traj.times, points)]
        errors.append(float(np.max(np.abs(traj.eval(traj.total_duration, 1)))))
        worst = max(errors)
        assert worst <= 1e-8, f"knot error {worst:.3e}"
        return f"max knot error {worst:.1e}"
    return _guard("spline_knots", run)


def _random_window(reference: ReferenceTrajectory, rng: np.random.Generator, name: str, start: float,
                   switch: float) -> WarpWindow:
    """start から始まる乱数ワーピング窓 (瞬間タスクと区間タスクを半々)"""
    pre, post = (float(v) for v in rng.uniform(0.0, 0.3, 2))
    t_ks = start + switch + pre
    grasp = RigidPose.from_xyz_rpy(rng.uniform(-0.05, 0.05, 3), rng.uniform(-math.pi, math.pi, 3))
    if rng.random() < 0.5:
        kind, duration, motion = "pick", 0.0, ()
    else:
        kind, duration = "operate", float(rng.uniform(0.1, 0.5))
        motion = ((0.0, RigidPose.identity()),
                  (duration, RigidPose.from_xyz_rpy(rng.uniform(-0.05, 0.05, 3), rng.uniform(-0.3, 0.3, 3))))
    t_ke = t_ks + duration * float(rng.uniform(0.8, 1.2))
    ref_start = reference.ee_pose(t_ks)
    task = TaskSpec(name=name, kind=kind, object_pose=ref_start @ grasp.inverse(), grasps=(grasp,),
                    duration=duration, motion=motion)
    return WarpWindow(task, 0, t_ks, t_ke, pre, post, switch, ref_start, reference.ee_pose(t_ke))


def random_warp_schedule(reference: ReferenceTrajectory, rng: np.random.Generator,
                         max_offset: float = 0.1) -> WarpSchedule:
    """
    重ならない1〜3個の窓と、平行移動・回転をずらした推定を持つスケジュール

    Args:
        reference: 名目参照軌道
        rng: 乱数生成器
        max_offset: 推定の位置ずれの上限 (m)
    """
    switch = float(rng.uniform(0.1, 0.4))
    cursor = float(rng.uniform(0.0, 0.5))
    windows: List[WarpWindow] = []
    estimates: Dict[str, RigidPose] = {}
    for k in range(int(rng.integers(1, 4))):
        window = _random_window(reference, rng, f"w{k}", cursor, switch)
        direction = rng.normal(size=3)
        offset = float(rng.uniform(0.0, max_offset)) * direction / np.linalg.norm(direction)
        estimates[window.name] = RigidPose.from_xyz_rpy(offset, rng.uniform(-0.3, 0.3, 3)) @ window.task.object_pose
        windows.append(window)
        cursor = window.outer_end + float(rng.uniform(0.0, 0.3))
    return WarpSchedule(windows, switch, estimates)


def check_warping(desc: RobotDescription, seed: int = 0, boundaries: int = 10_000,
                  max_offset: float = 0.1) -> CheckResult:
    """
    ワーピング参照の区分境界での連続性と σ_s + σ_ee = 1

    乱数スケジュールの境界で左右の区分の式を同じ時刻に評価し、位置・姿勢の差を
    1e-9 未満とする。σ は境界と各窓内外の乱数時刻で確かめる。
    """
    def run() -> str:
        rng = np.random.default_rng(seed)
        traj, _ = _sample_trajectory(desc, rng)
        reference = ReferenceTrajectory(desc, traj, 0.0)
        worst_pos = worst_rot = 0.0
        sampled = sigma_checked = 0
        while sampled < boundaries:
            schedule = random_warp_schedule(reference, rng, max_offset)
            for edge, pos, rot in boundary_jumps(reference, schedule):
                worst_pos, worst_rot = max(worst_pos, pos), max(worst_rot, rot)
                assert pos < 1e-9 and rot < 1e-9, \
                    f"warped reference jumps {pos:.3e} m / {rot:.3e} rad at t={edge:.4f}"
            sampled += 6 * len(schedule.windows)
            first, last = schedule.windows[0].outer_start, schedule.windows[-1].outer_end
            times = list(schedule.boundaries()) + list(rng.uniform(first - 0.2, last + 0.2, 4))
            for t in times:
                s, e = switch_weights(schedule, float(t))
                assert abs(s + e - 1.0) < 1e-12 and 0.0 <= s <= 1.0, f"sigma out of range at t={t:.4f}"
            sigma_checked += len(times)
        return (f"{sampled} boundaries, max jump {worst_pos:.1e} m / {worst_rot:.1e} rad, "
                f"sigma at {sigma_checked} times")
    return _guard("warping_continuity", run)


def check_scenario_roundtrip(preset: str) -> CheckResult:
    """parse → dump → parse が同一"""
    def run() -> str:
        model = load_scenario(preset)
        again = parse_scenario(yaml.safe_load(dump_scenario(model)))
        assert again == model, "scenario changed after round trip"
        return preset
    return _guard(f"scenario_roundtrip[{preset}]", run)


def _subsample(trace: Sequence[Dict[str, Any]], per_interval: int = TRACE_SUBSAMPLES
               ) -> Iterator[Tuple[float, Dict[str, Any], Dict[str, Any], float]]:
    """連続する2行の間を per_interval 等分した (t, 前の行, 次の行, 比率)"""
    for a, b in zip(trace[:-1], trace[1:]):
        for j in range(per_interval):
            alpha = j / per_interval
            yield a["t"] + alpha * (b["t"] - a["t"]), a, b, alpha
    if trace:
        yield trace[-1]["t"], trace[-1], trace[-1], 0.0


def _held_pose(a: Dict[str, Any], b: Dict[str, Any], alpha: float) -> RigidPose:
    pose_a = RigidPose(a["held_pose"][3:], a["held_pose"][:3])
    pose_b = RigidPose(b["held_pose"][3:], b["held_pose"][:3])
    return interp_se3(pose_a, pose_b, alpha)


def check_run(result: RunResult, settings: ToolkitSettings,
              world: Optional[EsdfGrid] = None) -> List[CheckResult]:
    """
    実行結果に対する不変条件

    トレースがあれば制御周期の4倍で補間し、接近・退避窓の手先が接近半直線から d_pos 以内、
    把持物体の球の弾性クリアランスが −d_ela 以上であることも確かめる。

    Args:
        result: 実行結果
        settings: 実行時の設定
        world: 把持物体のクリアランス検査に使うESDF (None なら検査しない)
    """
    out: List[CheckResult] = []
    opt = settings.optimizer

    def metrics() -> str:
        assert all(0.0 <= m.msct <= 1.0 for m in result.missions), "MSCT out of [0, 1]"
        assert 0.0 <= result.ssct <= 1.0, "SSCT out of [0, 1]"
        total = sum(m.cycle_time for m in result.missions if m.cycle_time is not None)
        assert abs(total - result.operation_time) < 1e-12, "operation time is not the sum of cycle times"
        return f"SSCT {result.ssct:.3f}"
    out.append(_guard("metrics", metrics))

    def tap() -> str:
        tp_min = settings.optimizer.tp_min
        successful = {name for m in result.missions if m.success for name in m.tasks}
        short = {name: rec["visible_before_manipulation"] for name, rec in result.visibility.items()
                 if name in successful and rec["visible_before_manipulation"] is not None
                 and rec["visible_before_manipulation"] + 1e-9 < tp_min}
        assert not short, f"observation shorter than {tp_min} s: {short}"
        return f"{len(result.visibility)} perception tasks"
    if settings.optimizer.enable_tap:
        out.append(_guard("observation_time", tap))

    def budget() -> str:
        ratio: Optional[float] = result.min_budget_ratio
        assert ratio is None or ratio > 1.0, f"replan slower than remaining trajectory (ratio {ratio:.2f})"
        return "no replans" if ratio is None else f"min ratio {ratio:.2f}"
    out.append(_guard("replan_budget", budget))

    def esi() -> str:
        smooth = SmoothParams(settings.geometry.ray_mu)
        checked, worst = 0, 0.0
        for window in result.esi_windows:
            for t, a, b, alpha in _subsample(result.trace):
                if not window.start <= t < window.end:
                    continue
                p = (1.0 - alpha) * np.asarray(a["ee"][:3]) + alpha * np.asarray(b["ee"][:3])
                dist = f_d_ray(p, window.origin, window.direction, smooth)
                worst = max(worst, dist)
                checked += 1
                assert dist <= opt.d_pos + 1e-9, \
                    f"{window.task} {window.phase}: end effector {dist:.4f} m off the approach ray at t={t:.3f}"
        return f"{len(result.esi_windows)} windows, {checked} samples, max {worst:.4f} m"
    if opt.enable_esi and result.trace:
        out.append(_guard("esi_ray", esi))

    def ecs() -> str:
        smooth = SmoothParams(settings.geometry.mu)
        checked, worst = 0, math.inf
        for t, a, b, alpha in _subsample(result.trace):
            name = a.get("held")
            record = result.held_objects.get(name) if name is not None else None
            if record is None or b.get("held") != name or a.get("held_pose") is None or b.get("held_pose") is None:
                continue
            pose = _held_pose(a, b, alpha)
            centres = np.array([pose.transform_point(s[:3]) for s in record.spheres])
            values, _, _ = world.query_batch(centres)
            for m, sphere in enumerate(record.spheres):
                radius = min((r_elastic(target[:3], centres[m], sphere[3], target[3], opt.d_s, smooth)
                              for target in record.targets[m]), default=sphere[3])
                margin = float(values[m]) - radius - opt.d_s
                worst = min(worst, margin)
                checked += 1
                assert margin >= -opt.d_ela - 1e-9, \
                    f"{name} sphere {m}: clearance {margin:.4f} m below -{opt.d_ela} at t={t:.3f}"
        return f"{checked} samples" + ("" if not checked else f", min margin {worst:.4f} m")
    if opt.enable_ecs and world is not None and result.trace:
        out.append(_guard("ecs_clearance", ecs))
    return out


def run_checks(desc: RobotDescription, presets: List[str], seed: int = 0) -> List[CheckResult]:
    """静的な検査を順に実行"""
    results = [check_smooth_goldens(), check_spline_knots(desc, seed), check_warping(desc, seed)]
    results.extend(check_scenario_roundtrip(p) for p in presets)
    for r in results:
        log = logger.info if r.passed else logger.error
        log(f"check {r.name}: {'ok' if r.passed else 'FAILED'} {r.detail}")
    return results
