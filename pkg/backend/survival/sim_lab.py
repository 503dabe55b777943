"""
シミュレーション実験室
裾の重い分布、Cox モデル下の打ち切りデータ生成、誤差指標、モンテカルロ実験の実行
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, field_validator
from scipy import integrate, special, stats

from .aggregation import aggregate_adaptive, aggregate_simple, aggregate_survival
from .cox_fit import breslow_baseline, fit_beta
from .data_model import SurvivalSample, make_sample
from .errors import DomainError, SurvivalError
from .manifest import RunManifest
from .settings import CalibrationSettings, SelectionParams
from .tail_model import SemiParamModel, as_output, hill_theta, semiparam_survival
from .threshold_select import calibrate_D, select_threshold

logger = logging.getLogger(__name__)

ESTIMATORS = ("nelson_aalen", "adaptive", "fixed", "simple_aggregation", "adaptive_aggregation")


# ====== 分布 ======

class TruncatedCauchyLaw(BaseModel):
    """0 を超える条件付きのコーシー分布（位置 x0、尺度 gamma_scale）"""
    kind: Literal["truncated_cauchy"] = "truncated_cauchy"
    x0: float = 0.0
    gamma_scale: float = Field(1.0, gt=0)


class ParetoLaw(BaseModel):
    """S(x) = x^{−1/θ}（x ≥ 1）"""
    kind: Literal["pareto"] = "pareto"
    theta: float = Field(1.0, gt=0)


class LogGammaLaw(BaseModel):
    """ln X ~ Gamma(形状 a, 率 b)（x > 1）"""
    kind: Literal["log_gamma"] = "log_gamma"
    a: float = Field(..., gt=0)
    b: float = Field(..., gt=0)


HeavyTailLaw = Annotated[Union[TruncatedCauchyLaw, ParetoLaw, LogGammaLaw], Field(discriminator="kind")]


def _cauchy_sf(y):
    """標準コーシーの生存関数 1/2 − arctan(y)/π（裾で桁落ちしない形）"""
    return np.arctan2(1.0, y) / np.pi


def tail_index(law) -> float:
    """フレシェ型の裾指数"""
    if isinstance(law, ParetoLaw):
        return law.theta
    if isinstance(law, LogGammaLaw):
        return 1.0 / law.b
    return 1.0


def law_survival(law, x):
    """生存関数 S(x)。台の外では 1 か 0 を返す"""
    x = np.asarray(x, dtype=float)
    if isinstance(law, TruncatedCauchyLaw):
        y0 = -law.x0 / law.gamma_scale
        y = (np.maximum(x, 0.0) - law.x0) / law.gamma_scale
        return as_output(_cauchy_sf(y) / _cauchy_sf(y0))
    if isinstance(law, ParetoLaw):
        return as_output(np.maximum(x, 1.0) ** (-1.0 / law.theta))
    return as_output(special.gammaincc(law.a, law.b * np.log(np.maximum(x, 1.0))))


def law_isf(law, v):
    """S(x) = v となる x（v ∈ (0, 1]）"""
    v = np.asarray(v, dtype=float)
    if isinstance(law, TruncatedCauchyLaw):
        s = v * _cauchy_sf(-law.x0 / law.gamma_scale)
        y = 1.0 / np.tan(np.pi * s)
        return as_output(np.maximum(law.x0 + law.gamma_scale * y, 0.0))
    if isinstance(law, ParetoLaw):
        return as_output(v ** (-law.theta))
    return as_output(np.exp(special.gammainccinv(law.a, v) / law.b))


def law_quantile(law, u):
    """分布関数の逆関数 F⁻¹(u)"""
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("u は (0, 1) の範囲である必要があります")
    return law_isf(law, 1.0 - u)


def law_density(law, x):
    """密度関数（台の外では 0）"""
    x = np.asarray(x, dtype=float)
    if isinstance(law, TruncatedCauchyLaw):
        y = (x - law.x0) / law.gamma_scale
        density = 1.0 / (np.pi * law.gamma_scale * (1.0 + y ** 2)) / _cauchy_sf(-law.x0 / law.gamma_scale)
        return as_output(np.where(x >= 0, density, 0.0))
    if isinstance(law, ParetoLaw):
        with np.errstate(divide="ignore"):
            density = np.maximum(x, 1.0) ** (-1.0 / law.theta - 1.0) / law.theta
        return as_output(np.where(x >= 1, density, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_x = np.log(np.where(x > 1, x, 2.0))
        density = stats.gamma.pdf(log_x, law.a, scale=1.0 / law.b) / np.where(x > 1, x, 2.0)
    return as_output(np.where(x > 1, density, 0.0))


def law_sample(law, rng: np.random.Generator, size: int) -> np.ndarray:
    """無条件の標本（対数ガンマはガンマ乱数の指数）"""
    if isinstance(law, LogGammaLaw):
        return np.exp(rng.gamma(law.a, 1.0 / law.b, size=size))
    return np.asarray(law_isf(law, 1.0 - rng.uniform(size=size)))


# ====== 設定とレポート ======

class CovariateLaw(BaseModel):
    """各座標が独立な一様分布"""
    kind: Literal["uniform"] = "uniform"
    low: float = -1.0
    high: float = 1.0

    def sample(self, rng: np.random.Generator, n: int, p: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(n, p))


class GridSpec(BaseModel):
    """評価グリッド"""
    start: float = Field(..., gt=0)
    stop: float = Field(..., gt=0)
    num: int = Field(..., ge=1)


class SimConfig(BaseModel):
    """モンテカルロ実験の設定"""
    name: str = "simulation"
    n: int = Field(..., ge=3)  # 標本サイズ
    n_mc: int = Field(..., ge=1)  # 複製数
    beta: List[float] = [-0.5]
    covariate_law: CovariateLaw = CovariateLaw()
    failure_baseline: HeavyTailLaw
    censoring_law: Optional[HeavyTailLaw] = None  # None なら打ち切りなし
    eval_points: List[float] = [100.0, 200.0, 300.0, 400.0, 500.0]
    seed: int = 0
    M: int = Field(10, ge=1)  # 集約する閾値の数
    m0: Optional[int] = Field(None, ge=1)
    m0_frac: Optional[float] = Field(None, gt=0, lt=1)
    selection_params: SelectionParams = SelectionParams()
    calibration: CalibrationSettings = CalibrationSettings()
    estimate_beta: bool = False  # True なら複製ごとに β を推定
    fixed_tau: Optional[float] = Field(None, gt=0)  # 固定閾値推定量の τ
    average_grid: GridSpec = GridSpec(start=0.1, stop=100.0, num=100)  # ARelMSE 用の幾何グリッド
    tau_sweep: Optional[GridSpec] = None  # 固定閾値の一様スイープ

    @field_validator("eval_points")
    @classmethod
    def check_eval_points(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("eval_points が空です")
        if any(x <= 0 for x in value) or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("eval_points は正の昇順である必要があります")
        return value


class TauSweepPoint(BaseModel):
    tau: float
    arel_mse: Optional[float]
    failures: int


class MCReport(BaseModel):
    """モンテカルロ実験の結果"""
    name: str
    n: int
    n_mc: int
    seed: int
    eval_points: List[float]
    rel_mse: Dict[str, List[Optional[float]]]  # 推定量ごとの評価点での RelMSE
    arel_mse: Dict[str, Optional[float]]  # 推定量ごとの ARelMSE
    failures: Dict[str, int]  # 推定に失敗した複製数
    excluded: Dict[str, int]  # 推定値 0 で除外した評価数
    censoring_rate: float  # 平均打ち切り率
    critical_value: Optional[float] = None
    tau_sweep: Optional[List[TauSweepPoint]] = None
    beta_mean: Optional[List[float]] = None
    theoretical_censoring_rate: Optional[float] = None  # 共変量 1 次元までで計算
    manifest: Optional[RunManifest] = None


# ====== データ生成と誤差指標 ======

def replication_streams(seed: int, replication: int, count: int = 3) -> List[np.random.Generator]:
    """(seed, 複製番号) から決まる独立な乱数列（共変量・故障・打ち切り）"""
    children = np.random.SeedSequence(seed, spawn_key=(replication,)).spawn(count)
    return [np.random.default_rng(child) for child in children]


def simulate_cox_sample(config: SimConfig, replication: int) -> SurvivalSample:
    """
    Cox モデルに従う打ち切り標本を生成する

    故障時間は S₀(x) = u^{exp(−β·z)} を逆変換で解き、打ち切り時間は共変量と独立に生成する。
    """
    covariate_rng, failure_rng, censoring_rng = replication_streams(config.seed, replication)
    beta = np.asarray(config.beta, dtype=float)

    z = config.covariate_law.sample(covariate_rng, config.n, beta.shape[0])
    exponent = np.exp(-(z @ beta))
    u = 1.0 - failure_rng.uniform(size=config.n)
    failure = np.asarray(law_isf(config.failure_baseline, u ** exponent))

    if config.censoring_law is None:
        return make_sample(failure, np.ones(config.n), z)

    censoring = law_sample(config.censoring_law, censoring_rng, config.n)
    status = (failure <= censoring).astype(int)
    return make_sample(np.minimum(failure, censoring), status, z)


def rel_mse(estimates, truth: float) -> Tuple[float, int]:
    """
    RelMSE = 平均 ln²(Ŝ/S)

    推定値が 0 の複製は無限大になるため除外し、その件数を返す。
    """
    if not 0 < truth <= 1:
        raise DomainError("真値は (0, 1] の範囲である必要があります")
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        raise DomainError("推定値がありません")
    finite = estimates > 0
    excluded = int(estimates.size - finite.sum())
    if not finite.any():
        return float("inf"), excluded
    return float(np.mean(np.log(estimates[finite] / truth) ** 2)), excluded


def avg_rel_mse(values) -> float:
    """グリッド上の RelMSE の算術平均"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DomainError("グリッドが空です")
    return float(values.mean())


def geometric_grid(start: float, stop: float, num: int) -> np.ndarray:
    if not 0 < start < stop or num < 1:
        raise DomainError("幾何グリッドは 0 < start < stop, num ≥ 1 が必要です")
    return np.geomspace(start, stop, num)


def censoring_rate_above(sample: SurvivalSample, tau: float) -> float:
    """τ を真に超える観測のうち打ち切られた割合（経験的な q̂_F）"""
    above = sample.times > tau
    if not above.any():
        raise DomainError(f"τ={tau:g} を超える観測がありません")
    return float(1.0 - sample.status[above].mean())


def theoretical_censoring_rate(config: SimConfig) -> float:
    """
    P(C < X) を数値積分で求める

    P(C < X | z) = ∫₀¹ S₀(S_C⁻¹(v))^{e^{β·z}} dv を共変量の分布で平均する（共変量は 1 次元まで）。
    """
    if config.censoring_law is None:
        return 0.0
    beta = np.asarray(config.beta, dtype=float)

    def conditional(multiplier: float) -> float:
        def integrand(v: float) -> float:
            return float(law_survival(config.failure_baseline, law_isf(config.censoring_law, v))) ** multiplier

        value, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
        return value

    if beta.shape[0] == 0 or not np.any(beta):
        return conditional(1.0)
    if beta.shape[0] > 1:
        raise DomainError("理論打ち切り率は共変量 1 次元までです")

    law = config.covariate_law
    value, _ = integrate.quad(lambda z: conditional(math.exp(beta[0] * z)), law.low, law.high, limit=100)
    return value / (law.high - law.low)


# ====== モンテカルロ ======

@dataclass
class ReplicationResult:
    """複製 1 本の結果（推定量ごとの ln²(Ŝ/S)、失敗なら None）"""
    censoring_rate: float
    squared_errors: Dict[str, Optional[np.ndarray]] = field(default_factory=dict)
    sweep_errors: Optional[np.ndarray] = None  # (τ の数, ARelMSE グリッド点数)
    beta: Optional[np.ndarray] = None


def _squared_log_errors(estimate, truth) -> np.ndarray:
    estimate = np.asarray(estimate, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(estimate > 0, np.log(estimate / truth) ** 2, np.inf)


def _estimate_baselines(config: SimConfig, sample: SurvivalSample, beta: np.ndarray, d: float, points: np.ndarray):
    """各推定量の Ŝ₀ を評価点で計算する"""
    cox = breslow_baseline(sample, beta)
    estimates: Dict[str, Optional[np.ndarray]] = {"nelson_aalen": np.exp(-cox.cum_hazard(points))}

    def attempt(name, build):
        try:
            estimates[name] = np.asarray(build())
        except SurvivalError as e:
            logger.debug("推定量 %s の失敗: %s", name, e.detail)
            estimates[name] = None

    try:
        selection = select_threshold(sample, beta, config.selection_params, d)
    except SurvivalError as e:
        logger.debug("閾値選択の失敗: %s", e.detail)
        estimates["adaptive"] = None
        estimates["adaptive_aggregation"] = None
    else:
        attempt("adaptive", lambda: semiparam_survival(
            SemiParamModel(cox, hill_theta(sample, beta, selection.tau_hat, cox)), None, points))
        m_eff = min(config.M, len(selection.profile))
        if m_eff < config.M:
            logger.debug("プロファイルの候補数が少ないため M=%d で集約します", m_eff)
        attempt("adaptive_aggregation", lambda: aggregate_survival(
            aggregate_adaptive(sample, beta, selection, m_eff, cox), None, points))

    if config.fixed_tau is not None:
        attempt("fixed", lambda: semiparam_survival(
            SemiParamModel(cox, hill_theta(sample, beta, config.fixed_tau, cox)), None, points))

    attempt("simple_aggregation", lambda: aggregate_survival(
        aggregate_simple(sample, beta, config.m0, config.M, config.m0_frac, cox), None, points))
    return cox, estimates


def _estimator_names(config: SimConfig) -> List[str]:
    return [name for name in ESTIMATORS if name != "fixed" or config.fixed_tau is not None]


def _sweep_taus(config: SimConfig) -> np.ndarray:
    return np.linspace(config.tau_sweep.start, config.tau_sweep.stop, config.tau_sweep.num)


def _failed_replication(config: SimConfig, sample: SurvivalSample, grid_size: int) -> ReplicationResult:
    """β の推定に失敗した複製（全推定量を失敗として数える）"""
    result = ReplicationResult(censoring_rate=1.0 - float(sample.status.mean()))
    result.squared_errors = {name: None for name in _estimator_names(config)}
    if config.tau_sweep is not None:
        result.sweep_errors = np.full((config.tau_sweep.num, grid_size), np.nan)
    return result


def run_replication(config: SimConfig, replication: int, d: float) -> ReplicationResult:
    """複製 1 本: 生成・推定・誤差計算"""
    sample = simulate_cox_sample(config, replication)
    eval_points = np.asarray(config.eval_points, dtype=float)
    grid = geometric_grid(config.average_grid.start, config.average_grid.stop, config.average_grid.num)

    beta = np.asarray(config.beta, dtype=float)
    if config.estimate_beta:
        try:
            beta = fit_beta(sample).beta
        except SurvivalError as e:
            logger.warning("複製 %d: β の推定に失敗しました: %s", replication, e.detail)
            return _failed_replication(config, sample, grid.size)

    points = np.concatenate((eval_points, grid))
    truth = np.asarray(law_survival(config.failure_baseline, points))

    cox, estimates = _estimate_baselines(config, sample, beta, d, points)
    result = ReplicationResult(censoring_rate=1.0 - float(sample.status.mean()), beta=beta)
    for name, estimate in estimates.items():
        result.squared_errors[name] = None if estimate is None else _squared_log_errors(estimate, truth)

    if config.tau_sweep is not None:
        taus = _sweep_taus(config)
        grid_truth = truth[eval_points.size:]
        rows = []
        for tau in taus:
            try:
                model = SemiParamModel(cox, hill_theta(sample, beta, float(tau), cox))
                rows.append(_squared_log_errors(semiparam_survival(model, None, grid), grid_truth))
            except SurvivalError:
                rows.append(np.full(grid.size, np.nan))
        result.sweep_errors = np.vstack(rows)
    return result


def _reduce(errors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """複製方向に平均（無限大は除外）。戻り値は (RelMSE, 除外数)"""
    finite = np.isfinite(errors)
    counts = finite.sum(axis=0)
    sums = np.where(finite, errors, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, errors.shape[0] - counts


def _optional(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def run_monte_carlo(config: SimConfig, n_jobs: int = 1) -> MCReport:
    """
    モンテカルロ実験を実行する

    臨界値 D は selection_params.critical_value が指定されていればそれを使い、
    なければ実行の最初に一度だけ較正する。複製は並列に実行し、複製番号順に集計する。

    Args:
        config: 実験設定
        n_jobs: 並列数

    Returns:
        MCReport
    """
    d = config.selection_params.critical_value
    if d is None:
        calibration = config.calibration
        d = calibrate_D(config.n, config.selection_params, calibration.quantile, calibration.n_mc, calibration.seed, n_jobs=n_jobs)

    logger.info("モンテカルロ開始: %s (n=%d, n_mc=%d, seed=%d)", config.name, config.n, config.n_mc, config.seed)
    results: List[ReplicationResult] = Parallel(n_jobs=n_jobs)(
        delayed(run_replication)(config, rep, d) for rep in range(config.n_mc)
    )

    n_eval = len(config.eval_points)
    names = [name for name in ESTIMATORS if any(name in r.squared_errors for r in results)]
    rel_values: Dict[str, List[Optional[float]]] = {}
    arel_values: Dict[str, Optional[float]] = {}
    failures: Dict[str, int] = {}
    excluded: Dict[str, int] = {}

    for name in names:
        rows = [r.squared_errors.get(name) for r in results]
        kept = [row for row in rows if row is not None]
        failures[name] = len(rows) - len(kept)
        if failures[name]:
            logger.warning("推定量 %s: %d/%d 本の複製で失敗", name, failures[name], config.n_mc)
        if not kept:
            rel_values[name] = [None] * n_eval
            arel_values[name] = None
            excluded[name] = 0
            continue
        means, dropped = _reduce(np.vstack(kept))
        rel_values[name] = [_optional(v) for v in means[:n_eval]]
        arel_values[name] = _optional(avg_rel_mse(means[n_eval:]))
        excluded[name] = int(dropped.sum())

    sweep = None
    if config.tau_sweep is not None:
        taus = _sweep_taus(config)
        stacked = np.stack([r.sweep_errors for r in results])  # (n_mc, τ, グリッド)
        sweep = []
        for j, tau in enumerate(taus):
            rows = stacked[:, j, :]
            ok = ~np.isnan(rows).any(axis=1)
            means = _reduce(rows[ok])[0] if ok.any() else np.array([np.nan])
            sweep.append(TauSweepPoint(tau=float(tau), arel_mse=_optional(avg_rel_mse(means)), failures=int((~ok).sum())))

    beta_mean = None
    if config.estimate_beta:
        fitted = [r.beta for r in results if r.beta is not None]
        if fitted:
            beta_mean = np.mean(fitted, axis=0).tolist()

    theoretical = None
    if len(config.beta) <= 1:
        theoretical = theoretical_censoring_rate(config)

    report = MCReport(
        name=config.name,
        n=config.n,
        n_mc=config.n_mc,
        seed=config.seed,
        eval_points=config.eval_points,
        rel_mse=rel_values,
        arel_mse=arel_values,
        failures=failures,
        excluded=excluded,
        censoring_rate=float(np.mean([r.censoring_rate for r in results])),
        critical_value=d,
        tau_sweep=sweep,
        beta_mean=beta_mean,
        theoretical_censoring_rate=theoretical,
    )
    logger.info("モンテカルロ終了: 平均打ち切り率=%.3f", report.censoring_rate)
    return report


def report_frame(report: MCReport) -> pd.DataFrame:
    """フラットな (estimator, x, rel_mse) 表"""
    records = [
        {"estimator": name, "x": x, "rel_mse": value}
        for name, values in report.rel_mse.items()
        for x, value in zip(report.eval_points, values)
    ]
    return pd.DataFrame.from_records(records, columns=["estimator", "x", "rel_mse"])
