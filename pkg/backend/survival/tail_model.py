"""
パレート裾モデル
パレート分布間のKLダイバージェンス、Hill型推定量 θ̂_τ、セミパラメトリック生存関数・累積ハザード・分位点
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .cox_fit import CoxFit, breslow_baseline
from .data_model import SurvivalSample, coerce_beta, coerce_z
from .errors import DomainError, NoEventsAboveThresholdError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TailFit:
    """閾値 τ 上のパレート裾の推定結果"""
    tau: float
    theta: float
    n_tau: int  # n̂_τ = Σ_{tᵢ>τ} δᵢ
    s0_at_tau: float  # Ŝ₀(τ)
    numerator: float  # Σ_{tᵢ>τ} e^{β·zᵢ} ln(tᵢ/τ)


@dataclass(frozen=True)
class SemiParamModel:
    """τ 以下はノンパラメトリック、τ 超はパレートのベースライン"""
    cox: CoxFit
    tail: TailFit

    def __post_init__(self):
        if self.cox.knots.size and self.tail.tau > self.cox.knots[-1]:
            raise DomainError("閾値 τ が最大観測時間を超えています")


def as_output(values):
    """0次元配列は float に戻す"""
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values


def check_time(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("x は 0 以上である必要があります")
    return x


def check_probability(p: float) -> float:
    if not 0 < p < 1:
        raise DomainError(f"確率 p={p} は (0, 1) の範囲外です")
    return float(p)


def kl_ratio(ratio):
    """K = r − 1 − ln r（検証なしの内部版）"""
    return ratio - 1.0 - np.log(ratio)


def kl_pareto(theta_a, theta_b):
    """
    パレート分布間の Kullback-Leibler ダイバージェンス

    K(θa, θb) = θa/θb − 1 − ln(θa/θb)
    """
    theta_a = np.asarray(theta_a, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)
    if np.any(~(theta_a > 0)) or np.any(~(theta_b > 0)):
        raise DomainError("KLダイバージェンスの引数は正である必要があります")
    return as_output(kl_ratio(theta_a / theta_b))


def snap_threshold(sample: SurvivalSample, tau: float) -> float:
    """τ 以上で最小の観測時間に寄せる"""
    candidates = sample.times[sample.times >= tau]
    if candidates.size == 0:
        raise DomainError(f"τ={tau} 以上の観測時間がありません")
    return float(candidates.min())


def hill_theta(
    sample: SurvivalSample,
    beta: np.ndarray,
    tau: float,
    cox: Optional[CoxFit] = None,
) -> TailFit:
    """
    Hill型の裾指数推定量

    θ̂_τ = Σ_{tᵢ>τ} e^{β·zᵢ} ln(tᵢ/τ) / Σ_{tᵢ>τ} δᵢ
    打ち切られた超過観測は分子にだけ寄与する。

    Args:
        sample: 標本
        beta: 回帰係数
        tau: 閾値（任意の正の値）
        cox: Ŝ₀(τ) を評価するベースライン（省略時は Breslow で計算）

    Returns:
        TailFit
    """
    if not tau > 0:
        raise DomainError("閾値 τ は正である必要があります")
    beta = coerce_beta(beta, sample.p)

    above = sample.times > tau
    n_tau = int(sample.status[above].sum())
    if n_tau == 0:
        raise NoEventsAboveThresholdError(f"閾値 τ={tau:g} より上にイベントがありません")

    risk = sample.risk_scores(beta)[above]
    numerator = float(np.sum(risk * np.log(sample.times[above] / tau)))

    if cox is None:
        cox = breslow_baseline(sample, beta)
    s0_at_tau = float(np.exp(-cox.cum_hazard(tau)))

    return TailFit(tau=float(tau), theta=numerator / n_tau, n_tau=n_tau, s0_at_tau=s0_at_tau, numerator=numerator)


class TailStatistics:
    """
    降順添字 k = 1..n の各観測 t_k を閾値としたときの n̂ と θ̂ の表

    累積和で全 k を一度に計算する。同時刻の観測は同じ値を持つ。
    """

    def __init__(self, sample: SurvivalSample, beta: np.ndarray):
        beta = coerce_beta(beta, sample.p)
        self.n = sample.n
        self.times = sample.sorted_times
        status = sample.sorted_status
        risk = sample.risk_scores(beta)[sample.order]

        # t_k より真に大きい観測の数（同時刻の先頭位置）
        self.above_count = np.searchsorted(-self.times, -self.times, side="left")

        # 最大値との比の対数で累積し、打ち消し誤差を抑える
        log_ratio = np.log(self.times / self.times[0]) if self.n else np.empty(0)
        events = np.concatenate(([0.0], np.cumsum(status)))
        weighted_log = np.concatenate(([0.0], np.cumsum(risk * log_ratio)))
        weight = np.concatenate(([0.0], np.cumsum(risk)))

        m = self.above_count
        self.n_above = events[m].astype(int)
        self.numerator = weighted_log[m] - weight[m] * log_ratio
        with np.errstate(divide="ignore", invalid="ignore"):
            self.theta = np.where(self.n_above > 0, self.numerator / np.maximum(self.n_above, 1), np.nan)

    def time(self, k):
        return self.times[np.asarray(k) - 1]

    def events_above(self, k):
        """n̂_{t_k}"""
        return self.n_above[np.asarray(k) - 1]

    def theta_at(self, k):
        """θ̂_{t_k}（計算不能なら nan）"""
        return self.theta[np.asarray(k) - 1]

    def numerator_at(self, k):
        return self.numerator[np.asarray(k) - 1]


def risk_multiplier(model_beta: np.ndarray, z) -> float:
    return float(np.exp(np.dot(coerce_z(z, model_beta.shape[0]), model_beta)))


def baseline_cum_hazard(model: SemiParamModel, x) -> np.ndarray:
    """Ĥ_{0,τ,θ̂}(x): τ 以下は Ĥ₀(x)、τ 超は Ĥ₀(τ) + ln(x/τ)/θ̂"""
    x = check_time(x)
    tau = model.tail.tau
    return model.cox.cum_hazard(np.minimum(x, tau)) + np.log(np.maximum(x, tau) / tau) / model.tail.theta


def semiparam_cum_hazard(model: SemiParamModel, z, x):
    """Ĥ_{z,τ,θ̂}(x) = e^{β·z} Ĥ_{0,τ,θ̂}(x)"""
    return as_output(risk_multiplier(model.cox.beta, z) * baseline_cum_hazard(model, x))


def semiparam_survival(model: SemiParamModel, z, x):
    """Ŝ_{z,τ,θ̂}(x) = Ŝ_{0,τ,θ̂}(x)^{e^{β·z}}"""
    return as_output(np.exp(-np.asarray(semiparam_cum_hazard(model, z, x))))


def semiparam_quantile(model: SemiParamModel, z, p: float) -> float:
    """
    Ŝ(x|z) ≤ p を満たす最小の x

    パレート領域では閉形式、階段領域では条件を満たす最小の節点を返す。
    p がちょうど接合点の値なら τ。
    """
    p = check_probability(p)
    tau = model.tail.tau
    multiplier = risk_multiplier(model.cox.beta, z)
    at_junction = semiparam_survival(model, z, tau)

    if p == at_junction:
        return tau
    if p < at_junction:
        h_tau = float(model.cox.cum_hazard(tau))
        return float(tau * np.exp(model.tail.theta * (-np.log(p) / multiplier - h_tau)))

    knots = model.cox.knots[model.cox.knots <= tau]
    survival = np.exp(-multiplier * model.cox.cum_hazard(knots))
    return float(knots[np.argmax(survival <= p)])


def nelson_aalen_quantile(cox: CoxFit, z, p: float) -> Optional[float]:
    """階段推定量の分位点（曲線が p に届かなければ None）"""
    p = check_probability(p)
    multiplier = risk_multiplier(cox.beta, z)
    survival = np.exp(-multiplier * cox.cum_hazard(cox.knots))
    hits = np.flatnonzero(survival <= p)
    if hits.size == 0:
        return None
    return float(cox.knots[hits[0]])


def curve_frame(x, cum_hazard) -> pd.DataFrame:
    """曲線のCSV出力用データフレーム"""
    cum_hazard = np.asarray(cum_hazard, dtype=float)
    return pd.DataFrame({"x": np.asarray(x, dtype=float), "survival": np.exp(-cum_hazard), "cum_hazard": cum_hazard})


def survival_curve(model: SemiParamModel, z, grid) -> pd.DataFrame:
    """グリッド上の (x, survival, cum_hazard)"""
    grid = np.atleast_1d(check_time(grid))
    return curve_frame(grid, semiparam_cum_hazard(model, z, grid))
