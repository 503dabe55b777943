"""
予測コマンド
保存済みモデルから生存確率・分位点を計算する
"""

import argparse
import logging
import sys
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from survival.errors import DataError, SurvivalError, UsageError
from survival.model_io import from_document, load_model, model_quantile, model_survival

from .common import runtime_parent

logger = logging.getLogger(__name__)

NA = "NA"


def register(subparsers) -> None:
    parser = subparsers.add_parser("predict", help="生存確率・分位点を計算", parents=[runtime_parent()])
    parser.add_argument("model", help="fit の出力JSON")
    parser.add_argument("--z", type=float, nargs="+", help="共変量（省略時は 0）")
    parser.add_argument("--survival-at", type=float, nargs="+", metavar="X", help="Ŝ(x|z) を出力")
    parser.add_argument("--quantile", type=float, nargs="+", metavar="P", help="Ŝ(x|z) ≤ p となる最小の x を出力")
    parser.add_argument("--batch", help="共変量列と x または p 列を持つCSV")
    parser.add_argument("--out", help="バッチ結果の出力先（省略時は標準出力）")
    parser.set_defaults(handler=run_predict)


def format_value(value: Optional[float]) -> str:
    """数値は10桁、届かない分位点は NA"""
    return NA if value is None else f"{value:.10g}"


def predict_batch(model, covariate_names, frame: pd.DataFrame) -> pd.DataFrame:
    """
    CSVの各行について予測する

    共変量列はモデルの covariate_names で探し、x 列があれば survival、p 列があれば quantile を追加する。
    """
    missing = [name for name in covariate_names if name not in frame.columns]
    if missing:
        raise DataError(f"バッチCSVに共変量列がありません: {', '.join(missing)}")
    if "x" not in frame.columns and "p" not in frame.columns:
        raise DataError("バッチCSVには x 列または p 列が必要です")

    z_rows = frame[list(covariate_names)].to_numpy(dtype=float) if covariate_names else np.zeros((len(frame), 0))
    result = frame.copy()
    if "x" in frame.columns:
        result["survival"] = [float(model_survival(model, z, x)) for z, x in zip(z_rows, frame["x"].astype(float))]
    if "p" in frame.columns:
        result["quantile"] = [format_value(model_quantile(model, z, p)) for z, p in zip(z_rows, frame["p"].astype(float))]
    return result


def run_predict(args: argparse.Namespace) -> int:
    """predict コマンド"""
    if not (args.survival_at or args.quantile or args.batch):
        raise UsageError("--survival-at, --quantile, --batch のいずれかを指定してください")

    try:
        document = load_model(args.model)
        model = from_document(document)

        if args.batch:
            result = predict_batch(model, document.covariate_names, pd.read_csv(args.batch))
            if args.out:
                result.to_csv(args.out, index=False)
                logger.info("保存しました: %s", args.out)
            else:
                result.to_csv(sys.stdout, index=False)
            return 0

        for x in args.survival_at or []:
            print(format_value(float(model_survival(model, args.z, x))))
        for p in args.quantile or []:
            print(format_value(model_quantile(model, args.z, p)))
        return 0

    except (SurvivalError, ValidationError):
        raise
    except OSError as e:
        raise DataError(f"ファイルを読み込めません: {e}")
    except Exception as e:
        raise SurvivalError(f"予測中に予期しないエラーが発生しました: {e}")
