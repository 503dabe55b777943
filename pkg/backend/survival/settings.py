"""
設定モデル
推定・閾値選択・集約・実行環境の既定値をまとめる
"""

from typing import Optional

from pydantic import BaseModel, Field, field_validator


class SelectionParams(BaseModel):
    """適応的閾値選択の設定"""
    n_grid: int = Field(100, ge=1)  # グリッドサイズ
    zeta_prime: float = 0.25  # 窓の下側比率 ζ′
    zeta_second: float = 0.05  # 窓の上側比率 ζ″
    critical_value: Optional[float] = Field(None, ge=0)  # 臨界値 D

    @field_validator("zeta_prime", "zeta_second")
    @classmethod
    def check_zeta(cls, value: float) -> float:
        if not 0 < value < 0.5:
            raise ValueError("ζ は 0 < ζ < 0.5 を満たす必要があります")
        return value


class NewtonSettings(BaseModel):
    """部分尤度最大化（ニュートン法）の設定"""
    tol: float = Field(1e-8, gt=0)  # 勾配の最大ノルム
    max_iter: int = Field(50, ge=1)
    max_halvings: int = Field(20, ge=0)  # ステップ半減の上限


class AggregationSettings(BaseModel):
    """集約推定の設定"""
    M: int = Field(10, ge=1)  # 集約する閾値の数
    m0: Optional[int] = Field(None, ge=1)  # 単純集約の開始添字（未指定なら最小許容値）
    m0_frac: Optional[float] = Field(None, gt=0, lt=1)  # 観測数に対する比率で m0 を指定


class CalibrationSettings(BaseModel):
    """臨界値 D のモンテカルロ較正設定"""
    quantile: float = Field(0.99, gt=0, lt=1)
    n_mc: int = Field(2000, ge=100)
    seed: int = 0


class RuntimeSettings(BaseModel):
    """実行環境の設定"""
    log_level: str = "INFO"
    threads: int = Field(1, ge=1)  # シミュレーションの並列数


def default_settings() -> dict:
    """既定の設定値を返却"""
    return {
        "selection": SelectionParams().model_dump(),
        "newton": NewtonSettings().model_dump(),
        "aggregation": AggregationSettings().model_dump(),
        "calibration": CalibrationSettings().model_dump(),
        "runtime": RuntimeSettings().model_dump(),
    }
