"""
累積ハザードの集約
複数の閾値で推定したセミパラメトリック累積ハザードを重み付き平均し、
ノンパラメトリック部とパレート部の接合を滑らかにする。
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from .cox_fit import CoxFit, breslow_baseline
from .data_model import SurvivalSample, coerce_beta
from .errors import DomainError, NoInformativeCandidatesError, SelectionError
from .tail_model import (
    SemiParamModel,
    TailFit,
    TailStatistics,
    as_output,
    check_probability,
    check_time,
    curve_frame,
    hill_theta,
    risk_multiplier,
    semiparam_cum_hazard,
)
from .threshold_select import ThresholdSelection

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AggregateModel:
    """閾値ごとの裾 (τ, θ̂) と重みの組、共通の Cox ベースライン"""
    cox: CoxFit
    components: Tuple[TailFit, ...]
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if len(self.components) == 0 or weights.shape != (len(self.components),):
            raise DomainError("成分と重みの数が一致しません")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise DomainError("重みは非負で和が 1 である必要があります")
        taus = [c.tau for c in self.components]
        if len(set(taus)) != len(taus):
            raise DomainError("集約の閾値が重複しています")

    @property
    def taus(self) -> np.ndarray:
        return np.array([c.tau for c in self.components])

    def members(self):
        """(SemiParamModel, 重み) の組"""
        return [(SemiParamModel(self.cox, tail), float(w)) for tail, w in zip(self.components, self.weights)]


def minimal_m0(stats: TailStatistics) -> int:
    """上に打ち切られていない観測を 1 件以上持つ最小の添字 m"""
    eligible = np.flatnonzero(stats.n_above >= 1)
    if eligible.size == 0:
        raise SelectionError("上にイベントを持つ閾値候補がありません")
    return int(eligible[0]) + 1


def resolve_m0(stats: TailStatistics, m0: Optional[int] = None, m0_frac: Optional[float] = None) -> int:
    """
    m₀ を決める

    明示指定 > 観測数の割合指定 > 許容される最小の添字 の順。
    """
    m_min = minimal_m0(stats)
    if m0 is not None:
        if m0 < m_min:
            raise SelectionError(f"m0={m0} は許容される最小値 {m_min} より小さいです")
        return int(m0)
    if m0_frac is not None:
        if not 0 < m0_frac < 1:
            raise DomainError("m0_frac は (0, 1) の範囲である必要があります")
        return max(m_min, math.ceil(m0_frac * stats.n))
    return m_min


def aggregate_simple(
    sample: SurvivalSample,
    beta: np.ndarray,
    m0: Optional[int] = None,
    M: int = 10,
    m0_frac: Optional[float] = None,
    cox: Optional[CoxFit] = None,
) -> AggregateModel:
    """
    単純集約: t_{m₀} から続く M 個の閾値に一様な重み 1/M

    同時刻の観測は一つの閾値として数える。

    Args:
        sample: 標本
        beta: 回帰係数
        m0: 最初の閾値の降順添字（None なら m0_frac か最小の許容値）
        M: 閾値の数
        m0_frac: m₀ = ⌈m0_frac·n⌉ とする割合指定
        cox: ベースライン（省略時は Breslow で計算）

    Returns:
        AggregateModel
    """
    if M < 1:
        raise DomainError("M は 1 以上である必要があります")
    beta = coerce_beta(beta, sample.p)
    stats = TailStatistics(sample, beta)
    start = resolve_m0(stats, m0, m0_frac)
    if start > sample.n:
        raise SelectionError(f"m0={start} が観測数 {sample.n} を超えています")

    candidates = stats.times[start - 1:]
    _, first = np.unique(candidates, return_index=True)
    taus = candidates[np.sort(first)][:M]
    if taus.size < M:
        raise SelectionError(f"m0={start} 以降に相異なる閾値が {M} 個ありません（{taus.size} 個）")

    cox = cox or breslow_baseline(sample, beta)
    components = tuple(hill_theta(sample, beta, float(tau), cox) for tau in taus)
    logger.info("単純集約: m0=%d, M=%d, τ ∈ [%g, %g]", start, M, taus.min(), taus.max())
    return AggregateModel(cox=cox, components=components, weights=np.full(M, 1.0 / M))


def aggregate_adaptive(
    sample: SurvivalSample,
    beta: np.ndarray,
    selection: ThresholdSelection,
    M: int = 10,
    cox: Optional[CoxFit] = None,
) -> AggregateModel:
    """
    適応的集約: L^Pen の大きい順に M 個の候補を取り、L^Pen に比例する重みを付ける

    同値の順位は小さい l（大きい閾値）を優先する。
    """
    if M < 1:
        raise DomainError("M は 1 以上である必要があります")
    if len(selection.profile) < M:
        raise SelectionError(f"プロファイルの候補数 {len(selection.profile)} が M={M} より少ないです")
    beta = coerce_beta(beta, sample.p)

    l_values = np.array([l for l, _ in selection.profile], dtype=int)
    values = np.array([v for _, v in selection.profile], dtype=float)
    if not np.all(np.isfinite(values)):
        raise SelectionError("プロファイルに有限でない値が含まれています")

    top = np.lexsort((l_values, -values))[:M]
    chosen_l = l_values[top]
    chosen_values = values[top]
    total = chosen_values.sum()
    if not total > 0:
        raise NoInformativeCandidatesError("有益な候補がありません（L^Pen がすべて 0）")

    stats = TailStatistics(sample, beta)
    cox = cox or breslow_baseline(sample, beta)

    # 同時刻の閾値は同一成分なので重みを合算
    weights_by_tau = {}
    for l, value in zip(chosen_l, chosen_values):
        tau = float(stats.time(int(l)))
        weights_by_tau[tau] = weights_by_tau.get(tau, 0.0) + value / total

    components = tuple(hill_theta(sample, beta, tau, cox) for tau in weights_by_tau)
    weights = np.array(list(weights_by_tau.values()))
    weights = weights / weights.sum()
    logger.info("適応的集約: M=%d, 成分数=%d, 最大重み=%.4f", M, len(components), weights.max())
    return AggregateModel(cox=cox, components=components, weights=weights)


def aggregate_cum_hazard(agg: AggregateModel, z, x):
    """Σ_k w_k Ĥ_{z,τ_k,θ̂_k}(x)"""
    x = check_time(x)
    total = np.zeros(x.shape)
    for model, weight in agg.members():
        total = total + weight * np.asarray(semiparam_cum_hazard(model, z, x))
    return as_output(total)


def aggregate_survival(agg: AggregateModel, z, x):
    """Ŝ(x|z) = exp(−Σ_k w_k Ĥ_{z,τ_k,θ̂_k}(x))"""
    return as_output(np.exp(-np.asarray(aggregate_cum_hazard(agg, z, x))))


def _cum_hazard_left(agg: AggregateModel, multiplier: float, x: float) -> float:
    """H(x−): 階段部分は左極限、パレート部分は連続"""
    total = 0.0
    for tail, weight in zip(agg.components, agg.weights):
        if x > tail.tau:
            value = agg.cox.cum_hazard(tail.tau) + math.log(x / tail.tau) / tail.theta
        else:
            value = agg.cox.cum_hazard.left_limit(x)
        total += weight * float(value)
    return multiplier * total


def aggregate_quantile(agg: AggregateModel, z, p: float) -> float:
    """
    Ŝ(x|z) ≤ p を満たす最小の x

    最大の閾値より先では H(x) = C + D·ln x なので閉形式、それ以前は節点と閾値の間で根を探す。
    """
    p = check_probability(p)
    target = -math.log(p)
    multiplier = risk_multiplier(agg.cox.beta, z)
    taus = agg.taus
    tau_max = float(taus.max())

    breakpoints = np.unique(np.concatenate((agg.cox.knots[agg.cox.knots <= tau_max], taus)))
    values = np.asarray(aggregate_cum_hazard(agg, z, breakpoints))
    hits = np.flatnonzero(values >= target)

    if hits.size == 0:
        slope = multiplier * float(np.sum(agg.weights / np.array([c.theta for c in agg.components])))
        offset = float(values[-1]) - slope * math.log(tau_max)
        return float(math.exp((target - offset) / slope))

    j = int(hits[0])
    right = float(breakpoints[j])
    if j == 0 or _cum_hazard_left(agg, multiplier, right) < target:
        return right

    left = float(breakpoints[j - 1])
    left_value = float(values[j - 1])

    def gap(x):
        value = left_value if x == left else _cum_hazard_left(agg, multiplier, x)
        return value - target

    return float(brentq(gap, left, right, xtol=1e-12, rtol=1e-14))


def aggregate_curve(agg: AggregateModel, z, grid) -> pd.DataFrame:
    """グリッド上の (x, survival, cum_hazard)"""
    grid = np.atleast_1d(check_time(grid))
    return curve_frame(grid, aggregate_cum_hazard(agg, z, grid))
