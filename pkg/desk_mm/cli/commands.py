"""
Desk Mobile Manipulation Toolkit - CLI Commands
個別コマンドの実装
"""

import csv
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click

from ..backend.planner import TrajectoryPlanner
from ..core.settings import ToolkitSettings, load_settings
from ..exceptions import DeskMMException
from ..reachability.irm import InverseReachabilityMap
from ..sim.checks import check_run, run_checks
from ..sim.runner import RunResult, export_trace_csv, load_or_build_irm, load_trace, run_scenario
from ..sim.scenario import PRESETS, Scenario, build_scenario, load_scenario, preset_scenario
from ..trajectory.export import save_trajectory

BENCH_COLUMNS = ("scenario", "d_sigma", "seed", "termination", "missions", "successes", "ssct",
                 "operation_time", "min_budget_ratio", "tap", "cmz", "esi", "ecs", "warping")


def _fail(message: str, error: Optional[Exception] = None) -> None:
    click.echo(f"Error: {message}{f': {error}' if error is not None else ''}", err=True)
    sys.exit(1)


def load_context_settings(config: Optional[str]) -> ToolkitSettings:
    try:
        return load_settings(config)
    except DeskMMException as e:
        _fail("設定の読み込みに失敗しました", e)


def resolve_scenario(scenario_path: Optional[str], preset: Optional[str], seed: int,
                     d_sigma: Optional[float] = None) -> Scenario:
    """
    シナリオファイルまたはプリセットから実行用シナリオを作る

    乱数種は真値の変位方向にも使う。
    """
    if scenario_path is None and preset is None:
        _fail("シナリオファイルか --preset を指定してください")
    if preset is not None:
        model = preset_scenario(preset, d_sigma, seed)
        return build_scenario(model)
    model = load_scenario(scenario_path)
    if d_sigma is not None:
        model = model.model_copy(update={"displacement": model.displacement.model_copy(
            update={"d_sigma": d_sigma})})
    return build_scenario(model, Path(scenario_path).resolve().parent)


def _write_json(path: Path, data: Dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False, default=str)


def plan_command(ctx, scenario_path: Optional[str], preset: Optional[str], out: str, seed: int) -> None:
    """先頭 N_T タスクの計画を解いて軌道と求解レポートを書き出す"""
    settings: ToolkitSettings = ctx.obj["settings"]
    try:
        scenario = resolve_scenario(scenario_path, preset, seed)
        click.echo(f"🔧 {scenario.name}: 逆到達可能性マップを準備しています...")
        irm = load_or_build_irm(scenario.desc, settings, ctx.obj["workers"])
        planner = TrajectoryPlanner(scenario.desc, irm, settings, ctx.obj["workers"])
        world = scenario.build_world(settings.world)
        tasks = scenario.tasks[:settings.sim.active_tasks]
        result = planner.plan(scenario.initial_state, tasks, world, scenario.obstacles)
    except DeskMMException as e:
        _fail("計画に失敗しました", e)

    out_dir = Path(out)
    save_trajectory(result.trajectory, out_dir / "trajectory.yaml")
    report = result.report.to_dict()
    report["tasks"] = [{"name": p.name, "grasp": p.grasp, "t_start": p.t_start, "t_end": p.t_end}
                       for p in result.planned]
    report["planning_ms"] = result.planning_ms
    _write_json(out_dir / "report.json", report)
    mark = "✅" if result.status == "planned" else "⚠️ "
    click.echo(f"{mark} {result.status}: 所要時間 {result.report.total_duration:.2f} s, "
               f"最大違反 {result.report.max_violation:.2e}, 計算 {result.planning_ms:.0f} ms")
    click.echo(f"   出力: {out_dir}")


def _echo_run(result: RunResult) -> None:
    click.echo(f"\n# {result.scenario} (seed={result.seed}, d_σ={result.d_sigma})")
    click.echo(f"終了: {result.termination}")
    for m in result.missions:
        status = "✅" if m.success else f"❌ {m.failure}"
        cycle = f"{m.cycle_time:.2f}" if m.cycle_time is not None else "-"
        click.echo(f"  mission {m.index}: {status}  C={cycle} s  T={m.ideal_time:.2f} s  MSCT={m.msct:.3f}")
    click.echo(f"SSCT: {result.ssct:.3f}  作業時間: {result.operation_time:.2f} s")
    if result.min_budget_ratio is not None:
        click.echo(f"再計画の時間比 (最小): {result.min_budget_ratio:.2f}")


def simulate_command(ctx, scenario_path: Optional[str], preset: Optional[str], out: Optional[str], seed: int,
                     d_sigma: Optional[float]) -> None:
    """閉ループ実行してトレースと指標を書き出す"""
    settings: ToolkitSettings = ctx.obj["settings"]
    try:
        scenario = resolve_scenario(scenario_path, preset, seed, d_sigma)
        result = run_scenario(scenario, settings, seed, log_dir=out, workers=ctx.obj["workers"])
    except DeskMMException as e:
        _fail("シミュレーションに失敗しました", e)
    if out:
        result.save(out)
    _echo_run(result)
    if result.termination == "aborted":
        _fail("シナリオが中断されました", Exception(json.dumps(result.diagnostics, ensure_ascii=False)))


def bench_row(result: RunResult) -> Dict[str, object]:
    row = {"scenario": result.scenario, "d_sigma": result.d_sigma, "seed": result.seed,
           "termination": result.termination, "missions": len(result.missions),
           "successes": result.success_count, "ssct": round(result.ssct, 6),
           "operation_time": round(result.operation_time, 6),
           "min_budget_ratio": None if result.min_budget_ratio is None else round(result.min_budget_ratio, 3)}
    row.update(result.ablations)
    return row


def bench_command(ctx, presets: Sequence[str], displacements: Sequence[float], seeds: int, out: str) -> None:
    """プリセット × 変位 × 乱数種で実行し指標表をCSVで書き出す"""
    settings: ToolkitSettings = ctx.obj["settings"]
    rows: List[Dict[str, object]] = []
    irms: Dict[str, InverseReachabilityMap] = {}
    for preset in presets or PRESETS:
        for d_sigma in displacements:
            for seed in range(seeds):
                try:
                    scenario = resolve_scenario(None, preset, seed, d_sigma)
                    if scenario.desc.name not in irms:
                        irms[scenario.desc.name] = load_or_build_irm(scenario.desc, settings, ctx.obj["workers"])
                    result = run_scenario(scenario, settings, seed, irms[scenario.desc.name],
                                          workers=ctx.obj["workers"], record_trace=False)
                except DeskMMException as e:
                    _fail(f"{preset} d_σ={d_sigma} seed={seed} の実行に失敗しました", e)
                rows.append(bench_row(result))
                click.echo(f"  {preset:12s} d_σ={d_sigma:.2f} seed={seed}: {result.termination:10s} "
                           f"{result.success_count}/{len(result.missions)} SSCT={result.ssct:.3f}")

    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"✅ {len(rows)} runs → {path}")


def check_command(ctx, preset: Optional[str], seed: int, run: bool) -> None:
    """不変条件スイート (--run なら閉ループ実行の検査も行う)"""
    settings: ToolkitSettings = ctx.obj["settings"]
    presets = [preset] if preset else list(PRESETS)
    try:
        scenario = resolve_scenario(None, presets[0], seed)
        results = run_checks(scenario.desc, presets, seed)
        if run:
            result = run_scenario(scenario, settings, seed, record_trace=True)
            results.extend(check_run(result, settings, scenario.build_world(settings.world)))
    except DeskMMException as e:
        _fail("検査の実行に失敗しました", e)

    for r in results:
        click.echo(f"{'✅' if r.passed else '❌'} {r.name}: {r.detail}")
    failed = [r for r in results if not r.passed]
    if failed:
        _fail(f"{len(failed)} 件の検査が失敗しました")
    click.echo(f"\n🎉 {len(results)} 件すべて合格")


def export_plot_command(trace_path: str, out: str) -> None:
    """トレース (JSON-lines) をプロット用CSVに変換"""
    try:
        rows = load_trace(trace_path)
    except DeskMMException as e:
        _fail("トレースの読み込みに失敗しました", e)
    if not rows:
        _fail("トレースが空です", Exception(trace_path))
    path = export_trace_csv(rows, out)
    click.echo(f"✅ {len(rows)} rows → {path}")
