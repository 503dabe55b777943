"""
閾値選択コマンド
折れ点 ŝ と適応的閾値 τ̂ を選び、選択レポートを保存する
"""

import argparse
import logging

from pydantic import ValidationError

from survival.errors import SurvivalError
from survival.manifest import finish_manifest, start_manifest
from survival.model_io import SelectionReport, save_document
from survival.threshold_select import select_threshold

from .common import (
    add_beta_option,
    add_selection_options,
    args_snapshot,
    load_sample,
    resolve_beta,
    resolve_critical_value,
    runtime_parent,
    selection_params,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("select", help="適応的閾値を選択", parents=[runtime_parent()])
    parser.add_argument("dataset", help="CSV（time,status,z1,…）")
    add_beta_option(parser)
    parser.add_argument("--out", default="selection.json", help="選択レポートの出力先")
    add_selection_options(parser)
    parser.set_defaults(handler=run_select)


def run_select(args: argparse.Namespace) -> int:
    """select コマンド"""
    try:
        sample = load_sample(args.dataset)
        manifest = start_manifest("select", args_snapshot(args), args.seed, [args.dataset])
        beta, _ = resolve_beta(sample, args.beta)
        params = selection_params(args)
        d = resolve_critical_value(args, sample.n, params)
        selection = select_threshold(sample, beta, params, d)

        save_document(args.out, SelectionReport(selection=selection, manifest=finish_manifest(manifest)))
        print(f"ŝ = {selection.s_hat:.10g} (k̂={selection.k_hat})  τ̂ = {selection.tau_hat:.10g} (l̂={selection.l_hat})")
        print(f"θ̂ = {selection.theta_hat:.10g}  D = {selection.critical_value:.6g}  exceeded = {selection.exceeded}")
        return 0

    except (SurvivalError, ValidationError):
        raise
    except Exception as e:
        raise SurvivalError(f"閾値選択中に予期しないエラーが発生しました: {e}")
