"""
集約コマンド
単純集約・適応的集約モデルを推定して保存する
"""

import argparse

from pydantic import ValidationError

from survival.errors import SurvivalError
from survival.manifest import finish_manifest, start_manifest
from survival.model_io import save_document, to_document

from .common import (
    add_aggregation_options,
    add_beta_option,
    add_selection_options,
    args_snapshot,
    load_sample,
    resolve_beta,
    runtime_parent,
)
from .fit import build_model


def register(subparsers) -> None:
    parser = subparsers.add_parser("aggregate", help="集約モデルを推定", parents=[runtime_parent()])
    parser.add_argument("dataset", help="CSV（time,status,z1,…）")
    parser.add_argument("--kind", choices=["simple", "adaptive"], default="simple")
    add_beta_option(parser)
    parser.add_argument("--out", default="aggregate.json", help="モデルJSONの出力先")
    add_aggregation_options(parser)
    add_selection_options(parser)
    parser.set_defaults(handler=run_aggregate)


def run_aggregate(args: argparse.Namespace) -> int:
    """aggregate コマンド"""
    try:
        sample = load_sample(args.dataset)
        manifest = start_manifest("aggregate", args_snapshot(args), args.seed, [args.dataset])
        beta, cox = resolve_beta(sample, args.beta)
        model, selection = build_model(sample, beta, cox, f"agg-{args.kind}", args)

        save_document(args.out, to_document(model, sample.covariate_names, selection, finish_manifest(manifest)))
        for tail, weight in zip(model.components, model.weights):
            print(f"τ = {tail.tau:.10g}  θ̂ = {tail.theta:.6g}  w = {weight:.6f}")
        return 0

    except (SurvivalError, ValidationError):
        raise
    except Exception as e:
        raise SurvivalError(f"集約中に予期しないエラーが発生しました: {e}")
