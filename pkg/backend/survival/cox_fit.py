"""
Cox比例ハザード推定
部分尤度のニュートン法による β 推定と、Breslow/Nelson-Aalen 型のベースライン累積ハザード
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .data_model import SurvivalSample, coerce_beta, coerce_z
from .errors import ConvergenceError, DataError, DomainError, SingularInformationError
from .settings import NewtonSettings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepFunction:
    """右連続の階段関数"""
    knots: np.ndarray  # 狭義単調増加
    values: np.ndarray  # [knotᵢ, knotᵢ₊₁) 上の値
    left_value: float = 0.0  # 最初の節点より左の値

    def __post_init__(self):
        if self.knots.shape != self.values.shape:
            raise DomainError("節点と値の長さが一致しません")
        if np.any(np.diff(self.knots) <= 0):
            raise DomainError("節点は狭義単調増加である必要があります")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.knots, x, side="right") - 1
        padded = np.concatenate(([self.left_value], self.values))
        return padded[idx + 1]

    def left_limit(self, x):
        """左極限 f(x−)"""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.knots, x, side="left") - 1
        padded = np.concatenate(([self.left_value], self.values))
        return padded[idx + 1]


@dataclass(frozen=True)
class CoxFit:
    """
    Cox モデルの推定結果

    increments は各節点（観測された相異なる時間）での ĥ₀、打ち切りのみの時刻では 0。
    """
    beta: np.ndarray
    knots: np.ndarray
    increments: np.ndarray
    cum_hazard: StepFunction
    log_partial_likelihood: float = float("nan")
    converged: bool = True
    iterations: int = 0

    def baseline_survival(self, x):
        """Ŝ₀(x) = exp(−Ĥ₀(x))"""
        return np.exp(-self.cum_hazard(x))


def _risk_set_sums(sample: SurvivalSample, beta: np.ndarray):
    """
    相異なる時間ごとのリスク集合の和

    Returns:
        (昇順の相異なる時間, 各時間のイベント数, Σ_{tⱼ≥u} e^{β·zⱼ}, 逆引き添字)
    """
    unique_times, inverse = np.unique(sample.times, return_inverse=True)
    risk = sample.risk_scores(beta)
    risk_by_time = np.bincount(inverse, weights=risk, minlength=unique_times.size)
    events_by_time = np.bincount(inverse, weights=sample.status, minlength=unique_times.size)
    at_risk = np.cumsum(risk_by_time[::-1])[::-1]
    return unique_times, events_by_time, at_risk, inverse


def log_partial_likelihood(sample: SurvivalSample, beta: np.ndarray) -> float:
    """Breslow 型の対数部分尤度 Σ_{δᵢ=1}[β·zᵢ − ln Σ_{tⱼ≥tᵢ} e^{β·zⱼ}]"""
    beta = coerce_beta(beta, sample.p)
    _, events_by_time, at_risk, _ = _risk_set_sums(sample, beta)
    eta = sample.linear_predictor(beta)
    has_events = events_by_time > 0
    return float(np.dot(sample.status, eta) - np.dot(events_by_time[has_events], np.log(at_risk[has_events])))


def _derivatives(sample: SurvivalSample, beta: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """対数部分尤度・勾配・ヘッセ行列"""
    unique_times, inverse = np.unique(sample.times, return_inverse=True)
    m = unique_times.size
    z = sample.covariates
    eta = z @ beta
    # オーバーフロー対策でシフト（比には影響しない）
    shift = eta.max()
    risk = np.exp(eta - shift)

    s0 = np.bincount(inverse, weights=risk, minlength=m)
    s1 = np.zeros((m, sample.p))
    np.add.at(s1, inverse, risk[:, None] * z)
    s2 = np.zeros((m, sample.p, sample.p))
    np.add.at(s2, inverse, risk[:, None, None] * z[:, :, None] * z[:, None, :])

    # t_j ≥ u のリスク集合へ累積
    s0 = np.cumsum(s0[::-1])[::-1]
    s1 = np.cumsum(s1[::-1], axis=0)[::-1]
    s2 = np.cumsum(s2[::-1], axis=0)[::-1]

    d = np.bincount(inverse, weights=sample.status, minlength=m)
    mask = d > 0
    zbar = s1[mask] / s0[mask, None]

    loglik = float(np.dot(sample.status, eta) - np.dot(d[mask], np.log(s0[mask]) + shift))
    grad = sample.status @ z - d[mask] @ zbar
    second = s2[mask] / s0[mask, None, None] - zbar[:, :, None] * zbar[:, None, :]
    hess = -np.tensordot(d[mask], second, axes=1)
    return loglik, grad, hess


def fit_beta(
    sample: SurvivalSample,
    init: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    settings: Optional[NewtonSettings] = None,
) -> CoxFit:
    """
    最大部分尤度による β の推定（ステップ半減付きニュートン法）

    定数の共変量列の係数は識別できないため 0 に固定する。
    ベースラインは空のまま返す（breslow_baseline で組み立てる）。
    """
    settings = settings or NewtonSettings()
    tol = settings.tol if tol is None else tol
    max_iter = settings.max_iter if max_iter is None else max_iter

    if int(sample.status.sum()) < 1:
        raise DataError("イベントが1件もないため β を推定できません")

    beta = coerce_beta(init, sample.p).copy()
    free = np.ptp(sample.covariates, axis=0) > 0 if sample.n else np.zeros(sample.p, dtype=bool)
    if np.any(~free):
        logger.warning("定数の共変量列 %s の係数を 0 に固定します", np.flatnonzero(~free).tolist())
        beta[~free] = 0.0

    empty = np.empty(0)
    empty_step = StepFunction(empty, empty)

    if not np.any(free):
        loglik = log_partial_likelihood(sample, beta)
        return CoxFit(beta, empty, empty, empty_step, loglik, True, 0)

    reduced = replace(sample, covariates=sample.covariates[:, free])
    b = beta[free]
    loglik, grad, hess = _derivatives(reduced, b)

    for iteration in range(1, max_iter + 1):
        if np.max(np.abs(grad)) <= tol:
            beta[free] = b
            logger.debug("ニュートン法が %d 回で収束: loglik=%.6f", iteration - 1, loglik)
            return CoxFit(beta, empty, empty, empty_step, loglik, True, iteration - 1)

        try:
            delta = linalg.solve(-hess, grad, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularInformationError(f"情報行列が特異です（単調尤度または分離の疑い）: {e}")
        if not np.all(np.isfinite(delta)):
            raise SingularInformationError("ニュートン方向に有限でない値が含まれています")

        # 尤度が減らないまでステップを半減
        step = 1.0
        for _ in range(settings.max_halvings + 1):
            candidate = b + step * delta
            new_loglik, new_grad, new_hess = _derivatives(reduced, candidate)
            if np.isfinite(new_loglik) and new_loglik >= loglik:
                break
            step /= 2
        else:
            beta[free] = b
            raise ConvergenceError("ステップ半減で尤度を改善できませんでした", beta=beta.copy(), iterations=iteration)

        logger.debug("反復 %d: step=%.4g, loglik=%.8f", iteration, step, new_loglik)
        b, loglik, grad, hess = candidate, new_loglik, new_grad, new_hess

    beta[free] = b
    if np.max(np.abs(grad)) <= tol:
        return CoxFit(beta, empty, empty, empty_step, loglik, True, max_iter)
    raise ConvergenceError(f"{max_iter} 回の反復で収束しませんでした", beta=beta.copy(), iterations=max_iter)


def breslow_baseline(sample: SurvivalSample, beta: np.ndarray, fit: Optional[CoxFit] = None) -> CoxFit:
    """
    Breslow 増分 ĥ₀(tᵢ) = δᵢ / Σ_{tⱼ≥tᵢ} e^{β·zⱼ} からベースラインを組み立てる

    Args:
        sample: 標本
        beta: 回帰係数
        fit: fit_beta の結果（尤度・収束情報を引き継ぐ）

    Returns:
        累積ハザード Ĥ₀ を持つ CoxFit
    """
    if sample.n == 0:
        raise DataError("標本が空です")
    beta = coerce_beta(beta, sample.p)

    unique_times, events_by_time, at_risk, _ = _risk_set_sums(sample, beta)
    increments = events_by_time / at_risk
    cum = StepFunction(unique_times, np.cumsum(increments), 0.0)

    if fit is None:
        return CoxFit(beta, unique_times, increments, cum, log_partial_likelihood(sample, beta), True, 0)
    return replace(fit, beta=beta, knots=unique_times, increments=increments, cum_hazard=cum)


def fit_cox(sample: SurvivalSample, beta: Optional[np.ndarray] = None, settings: Optional[NewtonSettings] = None) -> CoxFit:
    """β が与えられればそのまま、なければ推定してベースラインまで組み立てる"""
    if beta is not None:
        return breslow_baseline(sample, beta)
    fit = fit_beta(sample, settings=settings)
    return breslow_baseline(sample, fit.beta, fit)


def survival_at(fit: CoxFit, z: np.ndarray, x):
    """Ŝ(x|z) = Ŝ₀(x)^{e^{β·z}}"""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x は 0 以上である必要があります")
    multiplier = np.exp(np.dot(coerce_z(z, fit.beta.shape[0]), fit.beta))
    return np.exp(-multiplier * fit.cum_hazard(x))
