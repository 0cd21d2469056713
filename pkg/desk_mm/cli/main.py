"""
Desk Mobile Manipulation Toolkit - CLI Main Entry Point
メインCLIエントリーポイント
"""

import logging

import click

from ..sim.scenario import BENCHMARK_DISPLACEMENTS, PRESETS
from .commands import (bench_command, check_command, export_plot_command, load_context_settings, plan_command,
                       simulate_command)

PRESET_CHOICE = click.Choice(list(PRESETS))


def setup_logging(level: str = "INFO") -> None:
    """ログ設定の初期化"""
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='詳細ログを表示')
@click.option('--quiet', '-q', is_flag=True, help='エラーのみ表示')
@click.option('--config', type=click.Path(), help='設定ファイル (YAML)')
@click.option('--workers', type=int, default=1, show_default=True, help='並列ワーカー数')
@click.pass_context
def main(ctx, verbose, quiet, config, workers):
    """
    Desk Mobile Manipulation Toolkit CLI

    卓上スケールの移動マニピュレータの全身軌道計画と閉ループ評価
    """
    if quiet:
        log_level = "ERROR"
    elif verbose:
        log_level = "DEBUG"
    else:
        log_level = "WARNING"
    setup_logging(log_level)

    ctx.ensure_object(dict)
    ctx.obj['settings'] = load_context_settings(config)
    ctx.obj['workers'] = max(1, workers)
    ctx.obj['verbose'] = verbose


@main.command()
@click.argument('scenario', required=False, type=click.Path(exists=True))
@click.option('--preset', type=PRESET_CHOICE, help='同梱シナリオ')
@click.option('--out', '-o', type=click.Path(), default='plan_out', show_default=True, help='出力ディレクトリ')
@click.option('--seed', type=int, default=0, show_default=True, help='乱数種')
@click.pass_context
def plan(ctx, scenario, preset, out, seed):
    """シナリオ → 軌道ファイル + 求解レポート"""
    plan_command(ctx, scenario, preset, out, seed)


@main.command()
@click.argument('scenario', required=False, type=click.Path(exists=True))
@click.option('--preset', type=PRESET_CHOICE, help='同梱シナリオ')
@click.option('--out', '-o', type=click.Path(), help='トレース・指標の出力ディレクトリ')
@click.option('--seed', type=int, default=0, show_default=True, help='乱数種')
@click.option('--d-sigma', type=float, help='真値の変位 (m)')
@click.pass_context
def simulate(ctx, scenario, preset, out, seed, d_sigma):
    """シナリオ → トレース + 指標"""
    simulate_command(ctx, scenario, preset, out, seed, d_sigma)


@main.command()
@click.option('--preset', 'presets', type=PRESET_CHOICE, multiple=True, help='対象プリセット (既定: すべて)')
@click.option('--d-sigma', 'displacements', type=float, multiple=True, default=BENCHMARK_DISPLACEMENTS,
              show_default=True, help='真値の変位 (m)')
@click.option('--seeds', type=int, default=5, show_default=True, help='乱数種の数')
@click.option('--out', '-o', type=click.Path(), default='bench.csv', show_default=True, help='指標表 (CSV)')
@click.pass_context
def bench(ctx, presets, displacements, seeds, out):
    """シナリオ集合 × 乱数種 → 指標表"""
    bench_command(ctx, presets, displacements, seeds, out)


@main.command()
@click.option('--preset', type=PRESET_CHOICE, help='対象プリセット (既定: すべて)')
@click.option('--seed', type=int, default=0, show_default=True, help='乱数種')
@click.option('--run', is_flag=True, help='閉ループ実行の不変条件も検査')
@click.pass_context
def check(ctx, preset, seed, run):
    """不変条件スイートの実行"""
    check_command(ctx, preset, seed, run)


@main.command('export-plot')
@click.argument('trace', type=click.Path(exists=True))
@click.option('--out', '-o', type=click.Path(), default='trace.csv', show_default=True, help='出力CSV')
def export_plot(trace, out):
    """トレース → プロット用の列データ"""
    export_plot_command(trace, out)


if __name__ == '__main__':
    main()
