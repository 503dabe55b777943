"""
適応的閾値選択
グリッド上の逐次尤度比検定で折れ点 ŝ を求め、罰則付き準尤度の最大化で τ̂ を選ぶ。
臨界値 D はパレート標本のモンテカルロで較正する。
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel

from .data_model import SurvivalSample, coerce_beta, make_sample
from .errors import DomainError, EmptyWindowError, SelectionError
from .settings import SelectionParams
from .tail_model import TailStatistics, kl_ratio

logger = logging.getLogger(__name__)

# 窓の端点の丸め誤差対策
WINDOW_EPS = 1e-9


class ThresholdSelection(BaseModel):
    """閾値選択の結果レポート"""
    grid: List[int]  # 降順添字のグリッド K
    sweep: List[Optional[float]]  # 各グリッド点での max_l LR（検定不能なら None）
    k_hat: int
    s_hat: float  # 折れ点 ŝ = t_k̂
    profile: List[Tuple[int, float]]  # (l, L^Pen(ŝ, t_l))
    l_hat: int
    tau_hat: float  # τ̂ = t_l̂
    theta_hat: float
    n_tau: int
    critical_value: float
    exceeded: bool


@dataclass(frozen=True)
class ThreePartModel:
    """
    三区間モデル: s 以下はノンパラメトリック、(s, τ] は指数 λ、τ 超は指数 θ のパレート
    """
    s: float
    tau: float
    lam: float
    theta: float

    def __post_init__(self):
        if not 0 < self.s <= self.tau:
            raise DomainError("0 < s ≤ τ である必要があります")
        if not (self.lam > 0 and self.theta > 0):
            raise DomainError("λ と θ は正である必要があります")

    def cum_hazard_above(self, x):
        """s からの累積ハザード ∫_s^x h(u)du（x ≤ s では 0）"""
        x = np.asarray(x, dtype=float)
        middle = np.log(np.clip(x, self.s, self.tau) / self.s) / self.lam
        upper = np.log(np.maximum(x, self.tau) / self.tau) / self.theta
        return middle + upper

    def survival(self, x, s0_at_s: float):
        """x ≥ s の生存関数（s 以下の値は s0_at_s を介してつながる）"""
        return s0_at_s * np.exp(-self.cum_hazard_above(x))

    def log_likelihood(self, sample: SurvivalSample, beta: np.ndarray) -> float:
        """s 超の観測による部分準対数尤度"""
        above = sample.times > self.s
        t = sample.times[above]
        delta = sample.status[above]
        risk = sample.risk_scores(beta)[above]
        index = np.where(t <= self.tau, self.lam, self.theta)
        return float(np.sum(delta * (-np.log(index * t))) - np.sum(risk * self.cum_hazard_above(t)))


def _interval_events(sample: SurvivalSample, s: float, tau: float) -> int:
    """区間 (s, τ] のイベント数"""
    inside = (sample.times > s) & (sample.times <= tau)
    return int(sample.status[inside].sum())


def _exceedance_numerator(sample: SurvivalSample, risk: np.ndarray, threshold: float) -> float:
    above = sample.times > threshold
    return float(np.sum(risk[above] * np.log(sample.times[above] / threshold)))


def lambda_hat(sample: SurvivalSample, beta: np.ndarray, s: float, tau: float) -> float:
    """
    中間区間の指数の準最尤推定量

    λ̂_{s,τ} = (θ̂_s n̂_s − θ̂_τ n̂_τ) / n̂_{s,τ}、n̂_{s,τ} は (s, τ] のイベント数
    """
    if not 0 < s < tau:
        raise DomainError("0 < s < τ である必要があります")
    beta = coerce_beta(beta, sample.p)
    n_between = _interval_events(sample, s, tau)
    if n_between == 0:
        raise SelectionError(f"区間 ({s:g}, {tau:g}] にイベントがありません")

    risk = sample.risk_scores(beta)
    numerator_s = _exceedance_numerator(sample, risk, s)
    numerator_tau = _exceedance_numerator(sample, risk, tau)
    return (numerator_s - numerator_tau) / n_between


def fit_three_part(sample: SurvivalSample, beta: np.ndarray, s: float, tau: float) -> ThreePartModel:
    """(s, τ) を固定した三区間モデルの推定"""
    beta = coerce_beta(beta, sample.p)
    risk = sample.risk_scores(beta)
    n_tau = int(sample.status[sample.times > tau].sum())
    if n_tau == 0:
        raise SelectionError(f"閾値 τ={tau:g} より上にイベントがありません")
    theta = _exceedance_numerator(sample, risk, tau) / n_tau
    return ThreePartModel(s=s, tau=tau, lam=lambda_hat(sample, beta, s, tau), theta=theta)


def build_grid(
    sample: SurvivalSample,
    beta: np.ndarray,
    n_grid: int,
    stats: Optional[TailStatistics] = None,
) -> np.ndarray:
    """
    降順添字上の一様グリッド K

    k_min は t_k より真に上に 2 件以上のイベントがある最小の k。
    """
    if sample.n < 3:
        raise SelectionError("閾値選択には 3 件以上の観測が必要です")
    if int(sample.status.sum()) < 2:
        raise SelectionError("閾値選択には 2 件以上のイベントが必要です")
    stats = stats or TailStatistics(sample, beta)

    eligible = np.flatnonzero(stats.n_above >= 2)
    if eligible.size == 0:
        raise SelectionError("2 件以上のイベントを上に持つ観測がありません")
    k_min = int(eligible[0]) + 1

    count = min(n_grid, sample.n - k_min + 1)
    return np.unique(np.rint(np.linspace(k_min, sample.n, count)).astype(int))


def window_bounds(k: int, params: SelectionParams) -> Tuple[int, int]:
    """⌈ζ′k⌉ ≤ l ≤ ⌊(1−ζ″)k⌋"""
    low = max(1, math.ceil(params.zeta_prime * k - WINDOW_EPS))
    high = min(k - 1, math.floor((1 - params.zeta_second) * k + WINDOW_EPS))
    return low, high


def _lr_values(stats: TailStatistics, k, l):
    """LR(t_k, t_l) をベクトル化で計算（検定不能な組は nan）"""
    n_k = stats.events_above(k)
    n_l = stats.events_above(l)
    num_k = stats.numerator_at(k)
    num_l = stats.numerator_at(l)
    n_kl = n_k - n_l

    with np.errstate(divide="ignore", invalid="ignore"):
        theta_k = num_k / n_k
        theta_l = num_l / n_l
        lam = (num_k - num_l) / n_kl
        lr = n_kl * kl_ratio(lam / theta_k) + n_l * kl_ratio(theta_l / theta_k)
    valid = (n_l >= 1) & (n_kl >= 1) & (n_k >= 1)
    return np.where(valid, lr, np.nan)


def lr_statistic(
    sample: SurvivalSample,
    beta: np.ndarray,
    k: int,
    l: int,
    stats: Optional[TailStatistics] = None,
) -> float:
    """
    尤度比検定統計量

    LR(t_k, t_l) = n̂_{t_k,t_l} K(λ̂_{t_k,t_l}, θ̂_{t_k}) + n̂_{t_l} K(θ̂_{t_l}, θ̂_{t_k})
    """
    if not 1 <= l < k <= sample.n:
        raise DomainError(f"1 ≤ l < k ≤ n を満たしません (k={k}, l={l})")
    stats = stats or TailStatistics(sample, beta)
    value = float(_lr_values(stats, k, l))
    if math.isnan(value):
        raise SelectionError(f"(k={k}, l={l}) では λ̂ または θ̂ を計算できません")
    return value


def sweep_statistics(
    sample: SurvivalSample,
    beta: np.ndarray,
    params: SelectionParams,
    stats: Optional[TailStatistics] = None,
    grid: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    グリッドの各 k について窓内の max_l LR(t_k, t_l) を計算する

    Returns:
        (グリッド, 各点の最大値。検定可能な l がなければ -inf)
    """
    stats = stats or TailStatistics(sample, beta)
    if grid is None:
        grid = build_grid(sample, beta, params.n_grid, stats)

    k = grid[:, None]
    l = np.arange(1, sample.n + 1)[None, :]
    low = np.ceil(params.zeta_prime * k - WINDOW_EPS)
    high = np.floor((1 - params.zeta_second) * k + WINDOW_EPS)
    in_window = (l >= low) & (l <= high) & (l < k)

    lr = _lr_values(stats, np.broadcast_to(k, in_window.shape), np.broadcast_to(l, in_window.shape))
    lr = np.where(in_window & ~np.isnan(lr), lr, -np.inf)
    return grid, lr.max(axis=1)


def _resolve_critical_value(params: SelectionParams, critical_value: Optional[float]) -> float:
    value = params.critical_value if critical_value is None else critical_value
    if value is None:
        raise SelectionError("臨界値 D が指定されていません（--critical-value または --calibrate）")
    return float(value)


def find_breaking_point(
    sample: SurvivalSample,
    beta: np.ndarray,
    params: SelectionParams,
    critical_value: Optional[float] = None,
    stats: Optional[TailStatistics] = None,
) -> Tuple[int, bool]:
    """
    グリッドを k の昇順にたどり、max_l LR が D を初めて超える k を折れ点とする

    一度も超えなければグリッドの最後の点を返し、exceeded = False。
    """
    k_hat, exceeded, _, _ = _breaking_point(sample, beta, params, critical_value, stats)
    return k_hat, exceeded


def _breaking_point(sample, beta, params, critical_value, stats):
    critical_value = _resolve_critical_value(params, critical_value)
    grid, row_max = sweep_statistics(sample, beta, params, stats)
    hits = np.flatnonzero(row_max > critical_value)
    if hits.size:
        k_hat = int(grid[hits[0]])
        logger.debug("折れ点: k̂=%d (LR=%.4f > D=%.4f)", k_hat, row_max[hits[0]], critical_value)
        return k_hat, True, grid, row_max
    logger.debug("臨界値 D=%.4f を超えませんでした。最終グリッド点を使用", critical_value)
    return int(grid[-1]), False, grid, row_max


def penalized_likelihood(
    sample: SurvivalSample,
    beta: np.ndarray,
    k_hat: int,
    l: int,
    stats: Optional[TailStatistics] = None,
) -> float:
    """L^Pen(ŝ, t_l) = n̂_{t_l} K(θ̂_{t_l}, θ̂_{ŝ})"""
    if not 1 <= l < k_hat <= sample.n:
        raise DomainError(f"1 ≤ l < k̂ ≤ n を満たしません (k̂={k_hat}, l={l})")
    stats = stats or TailStatistics(sample, beta)
    n_l = int(stats.events_above(l))
    theta_k = stats.theta_at(k_hat)
    if n_l < 1 or not np.isfinite(theta_k):
        raise SelectionError(f"l={l} では θ̂ を計算できません")
    return float(n_l * kl_ratio(stats.theta_at(l) / theta_k))


def penalized_profile(stats: TailStatistics, k_hat: int, params: SelectionParams) -> Tuple[np.ndarray, np.ndarray]:
    """窓内で θ̂_{t_l} が計算可能な l とその L^Pen"""
    low, high = window_bounds(k_hat, params)
    l = np.arange(low, high + 1)
    l = l[stats.events_above(l) >= 1] if l.size else l
    if l.size == 0:
        raise EmptyWindowError(f"選択窓が空です (k̂={k_hat})")
    values = stats.events_above(l) * kl_ratio(stats.theta_at(l) / stats.theta_at(k_hat))
    return l, values


def select_threshold(
    sample: SurvivalSample,
    beta: np.ndarray,
    params: SelectionParams,
    critical_value: Optional[float] = None,
) -> ThresholdSelection:
    """
    適応的閾値 τ̂ = t_l̂ を選ぶ

    l̂ は窓 ⌈ζ′k̂⌉ ≤ l ≤ ⌊(1−ζ″)k̂⌋ で L^Pen を最大化する添字。
    同値の場合は小さい l（大きい閾値）を採用する。
    """
    beta = coerce_beta(beta, sample.p)
    stats = TailStatistics(sample, beta)
    d = _resolve_critical_value(params, critical_value)

    k_hat, exceeded, grid, row_max = _breaking_point(sample, beta, params, d, stats)
    l_values, profile = penalized_profile(stats, k_hat, params)

    best = int(np.argmax(profile))
    l_hat = int(l_values[best])
    tau_hat = float(stats.time(l_hat))
    logger.info("閾値選択: ŝ=%g (k̂=%d), τ̂=%g (l̂=%d), exceeded=%s", stats.time(k_hat), k_hat, tau_hat, l_hat, exceeded)

    return ThresholdSelection(
        grid=grid.tolist(),
        sweep=[float(v) if np.isfinite(v) else None for v in row_max],
        k_hat=k_hat,
        s_hat=float(stats.time(k_hat)),
        profile=[(int(l), float(v)) for l, v in zip(l_values, profile)],
        l_hat=l_hat,
        tau_hat=tau_hat,
        theta_hat=float(stats.theta_at(l_hat)),
        n_tau=int(stats.events_above(l_hat)),
        critical_value=d,
        exceeded=exceeded,
    )


def _calibration_replicate(
    n: int,
    params: SelectionParams,
    seed: int,
    replication: int,
    theta: float,
    censoring_theta: Optional[float],
) -> float:
    """パレート標本 1 本の逐次検定全体での max LR"""
    failure_seq, censoring_seq = np.random.SeedSequence(seed, spawn_key=(replication,)).spawn(2)
    times = np.random.default_rng(failure_seq).uniform(size=n) ** (-theta)
    status = np.ones(n)
    if censoring_theta is not None:
        censoring = np.random.default_rng(censoring_seq).uniform(size=n) ** (-censoring_theta)
        status = (times <= censoring).astype(float)
        times = np.minimum(times, censoring)

    sample = make_sample(times, status)
    try:
        _, row_max = sweep_statistics(sample, np.zeros(0), params)
    except SelectionError:
        return float("nan")
    finite = row_max[np.isfinite(row_max)]
    return float(finite.max()) if finite.size else float("nan")


def calibration_statistics(
    n: int,
    params: SelectionParams,
    n_mc: int,
    seed: int,
    theta: float = 1.0,
    censoring_theta: Optional[float] = None,
    n_jobs: int = 1,
) -> np.ndarray:
    """較正用の max LR を n_mc 本分（複製番号順）"""
    return np.asarray(
        Parallel(n_jobs=n_jobs)(
            delayed(_calibration_replicate)(n, params, seed, rep, theta, censoring_theta) for rep in range(n_mc)
        )
    )


def calibrate_D(
    n: int,
    params: SelectionParams,
    quantile: float = 0.99,
    n_mc: int = 2000,
    seed: int = 0,
    theta: float = 1.0,
    censoring_theta: Optional[float] = None,
    n_jobs: int = 1,
) -> float:
    """
    臨界値 D の較正

    標準パレート（既定 θ=1、打ち切り・共変量なし）標本で逐次検定全体の max LR を記録し、
    その経験分位点を返す。

    Args:
        n: 標本サイズ
        params: 選択パラメータ（critical_value は使わない）
        quantile: 分位点（例: 0.99）
        n_mc: 複製数
        seed: 乱数シード
        theta: パレートの裾指数
        censoring_theta: パレート打ち切りの裾指数（None なら打ち切りなし）
        n_jobs: 並列数

    Returns:
        臨界値 D
    """
    if not 0 < quantile < 1:
        raise DomainError("quantile は (0, 1) の範囲である必要があります")
    if n_mc < 100:
        raise DomainError("n_mc は 100 以上である必要があります")

    maxima = calibration_statistics(n, params, n_mc, seed, theta, censoring_theta, n_jobs)
    failed = int(np.isnan(maxima).sum())
    if failed:
        logger.warning("較正: %d/%d 本で検定可能な組がありませんでした", failed, n_mc)
    value = float(np.nanquantile(maxima, quantile))
    logger.info("較正: n=%d, n_mc=%d, quantile=%.3f → D=%.4f", n, n_mc, quantile, value)
    return value
