"""
較正コマンド
パレート標本のモンテカルロで臨界値 D を求め、JSONに保存する
"""

import argparse
import logging

from pydantic import ValidationError

from survival.errors import SurvivalError
from survival.manifest import finish_manifest, start_manifest
from survival.model_io import CriticalValueDocument, save_document
from survival.threshold_select import calibrate_D

from .common import add_selection_options, args_snapshot, calibration_settings, runtime_parent, selection_params

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("calibrate", help="臨界値 D を較正", parents=[runtime_parent()])
    parser.add_argument("--n", type=int, required=True, help="標本サイズ")
    parser.add_argument("--theta", type=float, default=1.0, help="パレートの裾指数")
    parser.add_argument("--censoring-theta", type=float, help="パレート打ち切りの裾指数（省略時は打ち切りなし）")
    parser.add_argument("--out", default="D.json", help="出力先")
    add_selection_options(parser, with_critical_value=False)
    parser.set_defaults(handler=run_calibrate)


def run_calibrate(args: argparse.Namespace) -> int:
    """calibrate コマンド"""
    settings = calibration_settings(args)
    params = selection_params(args)
    manifest = start_manifest("calibrate", args_snapshot(args), settings.seed)

    try:
        value = calibrate_D(
            args.n, params, settings.quantile, settings.n_mc, settings.seed,
            theta=args.theta, censoring_theta=args.censoring_theta, n_jobs=args.threads,
        )
        document = CriticalValueDocument(
            critical_value=value,
            n=args.n,
            quantile=settings.quantile,
            n_mc=settings.n_mc,
            seed=settings.seed,
            theta=args.theta,
            censoring_theta=args.censoring_theta,
            manifest=finish_manifest(manifest),
        )
        save_document(args.out, document)
        print(f"D = {value:.10g}")
        return 0

    except (SurvivalError, ValidationError):
        raise
    except Exception as e:
        raise SurvivalError(f"較正中に予期しないエラーが発生しました: {e}")
