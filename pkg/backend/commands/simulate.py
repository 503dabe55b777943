"""
シミュレーションコマンド
設定JSONに従ってモンテカルロ実験を実行し、レポートJSONとフラットなCSVを書き出す
"""

import argparse
import logging
from pathlib import Path

from pydantic import ValidationError

from survival.errors import DataError, SurvivalError
from survival.manifest import finish_manifest, start_manifest
from survival.model_io import save_document
from survival.sim_lab import SimConfig, report_frame, run_monte_carlo

from .common import args_snapshot, runtime_parent, write_csv

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="モンテカルロ実験を実行", parents=[runtime_parent()])
    parser.add_argument("config", help="SimConfig のJSON（configs/ を参照）")
    parser.add_argument("--out", help="レポートJSONの出力先（既定: <設定名>-report.json）")
    parser.add_argument("--csv", help="(estimator, x, rel_mse) CSVの出力先（既定: <設定名>-report.csv）")
    parser.add_argument("--n-mc", type=int, help="複製数の上書き")
    parser.add_argument("--seed", type=int, help="乱数シードの上書き")
    parser.set_defaults(handler=run_simulate)


def load_config(path: str, args: argparse.Namespace) -> SimConfig:
    """設定JSONを読み込み、コマンドラインの上書きを反映する"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"設定ファイルを読み込めません: {e}")
    config = SimConfig.model_validate_json(text)

    overrides = {k: v for k, v in (("n_mc", args.n_mc), ("seed", args.seed)) if v is not None}
    if overrides:
        config = SimConfig.model_validate({**config.model_dump(), **overrides})
    return config


def run_simulate(args: argparse.Namespace) -> int:
    """simulate コマンド"""
    config = load_config(args.config, args)
    stem = Path(args.config).stem
    out = args.out or f"{stem}-report.json"
    csv_path = args.csv or f"{stem}-report.csv"
    manifest = start_manifest("simulate", config.model_dump(), config.seed, [args.config])

    try:
        report = run_monte_carlo(config, n_jobs=args.threads)
        manifest = finish_manifest(manifest)
        report = report.model_copy(update={"manifest": manifest})

        save_document(out, report)
        write_csv(csv_path, report_frame(report), manifest)

        print(f"平均打ち切り率: {report.censoring_rate:.4f}  D = {report.critical_value:.6g}")
        for name, value in report.arel_mse.items():
            text = "NA" if value is None else f"{value:.6g}"
            print(f"  {name:22s} ARelMSE = {text}  失敗 = {report.failures.get(name, 0)}")
        return 0

    except (SurvivalError, ValidationError):
        raise
    except Exception as e:
        raise SurvivalError(f"シミュレーション中に予期しないエラーが発生しました: {e}")
