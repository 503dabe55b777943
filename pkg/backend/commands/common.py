"""
コマンド共通処理
オプション定義・設定の組み立て・データ読み込み・出力書き出し
"""

import argparse
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from survival.cox_fit import CoxFit, breslow_baseline, fit_beta
from survival.data_model import SurvivalSample, load_dataset
from survival.errors import DataError, UsageError
from survival.manifest import RunManifest, write_sidecar
from survival.model_io import load_critical_value
from survival.settings import AggregationSettings, CalibrationSettings, RuntimeSettings, SelectionParams
from survival.threshold_select import calibrate_D

logger = logging.getLogger(__name__)


def runtime_parent() -> argparse.ArgumentParser:
    """全コマンド共通のオプション"""
    defaults = RuntimeSettings()
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--log-level", default=defaults.log_level, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parent.add_argument("--threads", type=int, default=defaults.threads, help="並列数（シミュレーション・較正）")
    return parent


def add_beta_option(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beta", type=float, nargs="+", help="回帰係数（省略時は部分尤度で推定）")


def add_selection_options(parser: argparse.ArgumentParser, with_critical_value: bool = True) -> None:
    group = parser.add_argument_group("閾値選択")
    group.add_argument("--n-grid", type=int)
    group.add_argument("--zeta-prime", type=float)
    group.add_argument("--zeta-second", type=float)
    if with_critical_value:
        group.add_argument("--critical-value", help="臨界値 D（数値または calibrate の出力JSON）")
        group.add_argument("--calibrate", action="store_true", help="臨界値 D をこの場で較正する")
    group.add_argument("--quantile", type=float, help="較正の分位点")
    group.add_argument("--n-mc", type=int, help="較正の複製数")
    group.add_argument("--seed", type=int, help="較正の乱数シード")


def add_aggregation_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("集約")
    group.add_argument("--M", type=int, help="集約する閾値の数")
    group.add_argument("--m0", type=int, help="単純集約の開始添字")
    group.add_argument("--m0-frac", type=float, help="観測数に対する割合で m0 を指定（例: 0.06）")


def _given(args: argparse.Namespace, **names) -> dict:
    """指定されたオプションだけを設定モデルのフィールドに対応づける"""
    return {field: getattr(args, attr) for field, attr in names.items() if getattr(args, attr, None) is not None}


def selection_params(args: argparse.Namespace) -> SelectionParams:
    return SelectionParams(**_given(args, n_grid="n_grid", zeta_prime="zeta_prime", zeta_second="zeta_second"))


def aggregation_settings(args: argparse.Namespace) -> AggregationSettings:
    return AggregationSettings(**_given(args, M="M", m0="m0", m0_frac="m0_frac"))


def calibration_settings(args: argparse.Namespace) -> CalibrationSettings:
    return CalibrationSettings(**_given(args, quantile="quantile", n_mc="n_mc", seed="seed"))


def load_sample(path: str) -> SurvivalSample:
    try:
        return load_dataset(Path(path))
    except OSError as e:
        raise DataError(f"データファイルを読み込めません: {e}")


def resolve_beta(sample: SurvivalSample, beta: Optional[List[float]]) -> Tuple[np.ndarray, CoxFit]:
    """指定された β、なければ推定した β と Breslow ベースライン"""
    if beta is not None:
        cox = breslow_baseline(sample, np.asarray(beta, dtype=float))
        return cox.beta, cox
    fit = fit_beta(sample)
    logger.info("β̂ = %s（%d 回で収束）", np.round(fit.beta, 6).tolist(), fit.iterations)
    return fit.beta, breslow_baseline(sample, fit.beta, fit)


def resolve_critical_value(args: argparse.Namespace, n: int, params: SelectionParams) -> float:
    """--critical-value か --calibrate から D を得る"""
    if getattr(args, "critical_value", None) is not None:
        return load_critical_value(args.critical_value)
    if getattr(args, "calibrate", False):
        settings = calibration_settings(args)
        return calibrate_D(n, params, settings.quantile, settings.n_mc, settings.seed, n_jobs=args.threads)
    raise UsageError("適応的な閾値選択には --critical-value または --calibrate が必要です")


def parse_grid(text: str) -> np.ndarray:
    """`START:STOP:NUM`（等間隔）またはカンマ区切りの値"""
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            return np.linspace(float(start), float(stop), int(num))
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"グリッドの形式が不正です: {text}（START:STOP:NUM またはカンマ区切り）")


def write_csv(path: str, frame: pd.DataFrame, manifest: RunManifest) -> None:
    """CSVと横置きのマニフェストを書き出す"""
    frame.to_csv(path, index=False)
    write_sidecar(path, manifest)
    logger.info("保存しました: %s", path)


def args_snapshot(args: argparse.Namespace) -> dict:
    """マニフェストに残すオプション"""
    return {k: v for k, v in vars(args).items() if k != "handler"}
