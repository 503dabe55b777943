"""
例外定義
推定・選択・入出力の失敗を種類ごとに分類し、CLIの終了コードに対応づける
"""

from typing import Optional

import numpy as np


class SurvivalError(Exception):
    """全推定エラーの基底クラス"""
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class DataError(SurvivalError):
    """入力データの読み込み・検証エラー"""
    exit_code = 3

    def __init__(self, detail: str, line: Optional[int] = None):
        if line is not None:
            detail = f"{line}行目: {detail}"
        super().__init__(detail)
        self.line = line


class DomainError(DataError):
    """引数が定義域外"""


class NumericError(SurvivalError):
    """数値計算エラー"""
    exit_code = 4


class ConvergenceError(NumericError):
    """ニュートン法が収束しなかった"""

    def __init__(self, detail: str, beta: np.ndarray, iterations: int):
        super().__init__(detail)
        self.beta = beta
        self.iterations = iterations


class SingularInformationError(NumericError):
    """情報行列が特異（単調尤度・分離）"""


class SelectionError(SurvivalError):
    """閾値選択・集約のエラー"""
    exit_code = 5


class NoEventsAboveThresholdError(SelectionError):
    """閾値より上にイベントがない"""


class EmptyWindowError(SelectionError):
    """選択窓が空"""


class NoInformativeCandidatesError(SelectionError):
    """罰則付き尤度がすべて0で重みが定まらない"""


class UsageError(SurvivalError):
    """コマンドラインの指定が不足・矛盾している"""
    exit_code = 2
