"""
推定コマンド
データセットから Nelson-Aalen・固定閾値・適応的閾値・集約モデルを推定して保存する
"""

import argparse
import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import ValidationError

from survival.aggregation import aggregate_adaptive, aggregate_simple
from survival.cox_fit import CoxFit
from survival.data_model import SurvivalSample
from survival.errors import SurvivalError, UsageError
from survival.manifest import finish_manifest, start_manifest
from survival.model_io import FittedModel, model_curve, save_document, to_document
from survival.tail_model import SemiParamModel, hill_theta, snap_threshold
from survival.threshold_select import ThresholdSelection, select_threshold

from .common import (
    add_aggregation_options,
    add_beta_option,
    add_selection_options,
    aggregation_settings,
    args_snapshot,
    load_sample,
    parse_grid,
    resolve_beta,
    resolve_critical_value,
    runtime_parent,
    selection_params,
    write_csv,
)

logger = logging.getLogger(__name__)

METHODS = ("na", "fixed:TAU", "adaptive", "agg-simple", "agg-adaptive")


def register(subparsers) -> None:
    parser = subparsers.add_parser("fit", help="モデルを推定して保存", parents=[runtime_parent()])
    parser.add_argument("dataset", help="CSV（time,status,z1,…）")
    parser.add_argument("--method", default="adaptive", help=f"推定方法: {', '.join(METHODS)}")
    add_beta_option(parser)
    parser.add_argument("--out", default="model.json", help="モデルJSONの出力先")
    parser.add_argument("--curve", help="生存曲線CSVの出力先")
    parser.add_argument("--grid", help="曲線のグリッド（START:STOP:NUM またはカンマ区切り）")
    parser.add_argument("--z", type=float, nargs="+", help="曲線の共変量（省略時は 0）")
    add_selection_options(parser)
    add_aggregation_options(parser)
    parser.set_defaults(handler=run_fit)


def parse_method(method: str) -> Tuple[str, Optional[float]]:
    """`fixed:TAU` は ("fixed", TAU) に分解"""
    if method.startswith("fixed:"):
        try:
            return "fixed", float(method.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"固定閾値の指定が不正です: {method}")
    if method not in ("na", "adaptive", "agg-simple", "agg-adaptive"):
        raise UsageError(f"不明な推定方法です: {method}（{', '.join(METHODS)}）")
    return method, None


def build_model(
    sample: SurvivalSample,
    beta: np.ndarray,
    cox: CoxFit,
    method: str,
    args: argparse.Namespace,
) -> Tuple[FittedModel, Optional[ThresholdSelection]]:
    """
    推定方法に応じてモデルを組み立てる

    Returns:
        (モデル, 閾値選択の結果。選択を行わない方法では None)
    """
    kind, tau = parse_method(method)
    if kind == "na":
        return cox, None
    if kind == "fixed":
        snapped = snap_threshold(sample, tau)
        if snapped != tau:
            logger.info("閾値 τ=%g を観測時間 %g に寄せました", tau, snapped)
        return SemiParamModel(cox, hill_theta(sample, beta, snapped, cox)), None

    aggregation = aggregation_settings(args)
    if kind == "agg-simple":
        return aggregate_simple(sample, beta, aggregation.m0, aggregation.M, aggregation.m0_frac, cox), None

    params = selection_params(args)
    d = resolve_critical_value(args, sample.n, params)
    selection = select_threshold(sample, beta, params, d)
    if kind == "adaptive":
        return SemiParamModel(cox, hill_theta(sample, beta, selection.tau_hat, cox)), selection
    return aggregate_adaptive(sample, beta, selection, aggregation.M, cox), selection


def run_fit(args: argparse.Namespace) -> int:
    """fit コマンド"""
    if args.curve and not args.grid:
        raise UsageError("--curve には --grid が必要です")
    try:
        sample = load_sample(args.dataset)
        manifest = start_manifest("fit", args_snapshot(args), getattr(args, "seed", None), [args.dataset])
        beta, cox = resolve_beta(sample, args.beta)
        model, selection = build_model(sample, beta, cox, args.method, args)

        manifest = finish_manifest(manifest)
        save_document(args.out, to_document(model, sample.covariate_names, selection, manifest))
        if args.curve:
            write_csv(args.curve, model_curve(model, args.z, parse_grid(args.grid)), manifest)

        if selection is not None:
            print(f"τ̂ = {selection.tau_hat:.10g}  θ̂ = {selection.theta_hat:.10g}  ŝ = {selection.s_hat:.10g}  exceeded = {selection.exceeded}")
        print(f"モデルを保存しました: {args.out}")
        return 0

    except (SurvivalError, ValidationError):
        raise
    except Exception as e:
        raise SurvivalError(f"推定中に予期しないエラーが発生しました: {e}")
