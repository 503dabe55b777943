"""
データモデル
生存時間データ (t, δ, z) の読み込み・検証・降順並べ替えを行う
"""

import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .errors import DataError, DomainError

logger = logging.getLogger(__name__)

COMMENT_PREFIX = "#"


class DatasetSchema(BaseModel):
    """CSV列の対応"""
    time_col: str = "time"
    status_col: str = "status"
    covariate_cols: Optional[List[str]] = None  # 未指定なら残りの列すべて


class DatasetDiagnostics(BaseModel):
    """データセットの要約"""
    n: int
    event_count: int
    censoring_rate: float
    max_time: float
    max_time_censored: bool


@dataclass(frozen=True)
class SurvivalSample:
    """
    観測 (tᵢ, δᵢ, zᵢ) の集合

    order は時間の降順 t₍1₎ ≥ … ≥ t₍n₎ を与える置換。
    同時刻ではイベント（δ=1）を打ち切りより先に置き、さらに入力順を保つ。
    """
    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    order: np.ndarray
    covariate_names: tuple = ()

    @property
    def n(self) -> int:
        return int(self.times.shape[0])

    @property
    def p(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def sorted_times(self) -> np.ndarray:
        return self.times[self.order]

    @property
    def sorted_status(self) -> np.ndarray:
        return self.status[self.order]

    @property
    def sorted_covariates(self) -> np.ndarray:
        return self.covariates[self.order]

    def time_at(self, k: int) -> float:
        """降順の k 番目（1始まり）の観測時間 t_k"""
        if not 1 <= k <= self.n:
            raise DomainError(f"添字 {k} は 1..{self.n} の範囲外です")
        return float(self.times[self.order[k - 1]])

    def linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        """β·zᵢ"""
        beta = coerce_beta(beta, self.p)
        if self.p == 0:
            return np.zeros(self.n)
        return self.covariates @ beta

    def risk_scores(self, beta: np.ndarray) -> np.ndarray:
        """e^{β·zᵢ}"""
        return np.exp(self.linear_predictor(beta))

    def scaled(self, factor: float) -> "SurvivalSample":
        """全観測時間を factor 倍した標本"""
        return make_sample(self.times * factor, self.status, self.covariates, self.covariate_names)


def coerce_beta(beta: Optional[Union[Sequence[float], np.ndarray]], p: int) -> np.ndarray:
    """回帰係数を長さ p のベクトルに整える"""
    if beta is None:
        return np.zeros(p)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (p,):
        raise DomainError(f"β の次元 {beta.shape[0]} が共変量数 {p} と一致しません")
    if not np.all(np.isfinite(beta)):
        raise DomainError("β に有限でない値が含まれています")
    return beta


def coerce_z(z: Optional[Union[Sequence[float], np.ndarray]], p: int) -> np.ndarray:
    """共変量ベクトルを長さ p に整える（None は 0 ベクトル）"""
    if z is None:
        return np.zeros(p)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (p,):
        raise DomainError(f"共変量ベクトルの次元 {z.shape[0]} が {p} と一致しません")
    return z


def descending_order(times: np.ndarray, status: np.ndarray) -> np.ndarray:
    """時間の降順、同時刻はイベント優先、最後に入力順（安定）"""
    return np.lexsort((-status, -times))


def make_sample(
    times: Sequence[float],
    status: Sequence[int],
    covariates: Optional[np.ndarray] = None,
    covariate_names: Optional[Sequence[str]] = None,
) -> SurvivalSample:
    """
    配列から検証済みの標本を作る

    Args:
        times: 観測時間 T = min(X, C)
        status: イベント指示子 δ
        covariates: n×p 共変量行列（None なら p = 0）
        covariate_names: 共変量名

    Returns:
        SurvivalSample
    """
    times = np.array(times, dtype=float).ravel()
    status_raw = np.asarray(status, dtype=float).ravel()
    n = times.shape[0]

    if covariates is None:
        covariates = np.zeros((n, 0))
    covariates = np.array(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates.reshape(n, -1) if n else covariates.reshape(0, 0)
    if covariates.shape[0] != n:
        raise DataError(f"共変量の行数 {covariates.shape[0]} が観測数 {n} と一致しません")
    if status_raw.shape[0] != n:
        raise DataError(f"status の長さ {status_raw.shape[0]} が観測数 {n} と一致しません")

    if not np.all(np.isfinite(times)) or np.any(times <= 0):
        raise DomainError("観測時間は正の有限値である必要があります")
    if not np.all(np.isin(status_raw, (0.0, 1.0))):
        raise DomainError("status は 0 または 1 である必要があります")
    if not np.all(np.isfinite(covariates)):
        raise DataError("共変量に欠損または有限でない値があります")

    status_arr = status_raw.astype(int)
    order = descending_order(times, status_arr)
    if covariate_names is None:
        covariate_names = [f"z{j + 1}" for j in range(covariates.shape[1])]

    for arr in (times, status_arr, covariates, order):
        arr.setflags(write=False)

    return SurvivalSample(
        times=times,
        status=status_arr,
        covariates=covariates,
        order=order,
        covariate_names=tuple(covariate_names),
    )


def _read_source(source: Union[str, Path, bytes, BinaryIO]) -> str:
    """入力をUTF-8テキストとして読み込む"""
    try:
        if isinstance(source, bytes):
            return source.decode("utf-8")
        if isinstance(source, (str, Path)):
            return Path(source).read_text(encoding="utf-8")
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    except UnicodeDecodeError as e:
        raise DataError(f"UTF-8 として読み込めません（{e.start} バイト目）")


def load_dataset(
    source: Union[str, Path, bytes, BinaryIO],
    schema: Optional[DatasetSchema] = None,
) -> SurvivalSample:
    """
    CSV（ヘッダ `time,status,z1,…,zp`）から標本を読み込む

    `#` で始まる行と空行は読み飛ばす。エラーには元ファイルの行番号を付ける。
    """
    schema = schema or DatasetSchema()
    text = _read_source(source)

    # コメント行を除き、元の行番号を保持
    kept_lines = []
    line_numbers = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(COMMENT_PREFIX):
            continue
        kept_lines.append(stripped)
        line_numbers.append(number)

    if not kept_lines:
        raise DataError("ヘッダ行がありません")

    try:
        frame = pd.read_csv(io.StringIO("\n".join(kept_lines)), dtype=str, skipinitialspace=True)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = line_numbers[int(match.group(1)) - 1] if match else None
        raise DataError(f"CSVの形式が不正です: {e}", line=line)

    frame.columns = [c.strip() for c in frame.columns]
    for column in (schema.time_col, schema.status_col):
        if column not in frame.columns:
            raise DataError(f"列 '{column}' がありません")

    covariate_cols = schema.covariate_cols
    if covariate_cols is None:
        covariate_cols = [c for c in frame.columns if c not in (schema.time_col, schema.status_col)]
    missing = [c for c in covariate_cols if c not in frame.columns]
    if missing:
        raise DataError(f"共変量列がありません: {', '.join(missing)}")

    columns = [schema.time_col, schema.status_col, *covariate_cols]
    numeric = frame[columns].apply(pd.to_numeric, errors="coerce")

    # 数値でないセル・欠損セルは行番号付きで拒否
    bad = numeric.isna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataError(f"列 '{columns[col]}' が数値でないか欠損しています", line=line_numbers[row + 1])

    times = numeric[schema.time_col].to_numpy(dtype=float)
    status = numeric[schema.status_col].to_numpy(dtype=float)

    bad_time = np.flatnonzero(~np.isfinite(times) | (times <= 0))
    if bad_time.size:
        raise DomainError("観測時間は正の有限値である必要があります", line=line_numbers[bad_time[0] + 1])
    bad_status = np.flatnonzero(~np.isin(status, (0.0, 1.0)))
    if bad_status.size:
        raise DomainError("status は 0 または 1 である必要があります", line=line_numbers[bad_status[0] + 1])

    sample = make_sample(times, status, numeric[covariate_cols].to_numpy(dtype=float), covariate_cols)
    logger.info("データ読み込み: n=%d, p=%d, イベント数=%d", sample.n, sample.p, int(sample.status.sum()))
    return sample


def dump_dataset(sample: SurvivalSample, schema: Optional[DatasetSchema] = None) -> str:
    """標本をCSV文字列に書き出す（load_dataset と往復可能）"""
    schema = schema or DatasetSchema()
    frame = pd.DataFrame({schema.time_col: sample.times, schema.status_col: sample.status})
    for j, name in enumerate(sample.covariate_names):
        frame[name] = sample.covariates[:, j]
    return frame.to_csv(index=False)


def diagnostics(sample: SurvivalSample) -> DatasetDiagnostics:
    """件数・打ち切り率などの要約"""
    if sample.n == 0:
        raise DataError("標本が空のため打ち切り率を定義できません")

    event_count = int(sample.status.sum())
    top = sample.order[0]
    return DatasetDiagnostics(
        n=sample.n,
        event_count=event_count,
        censoring_rate=1.0 - event_count / sample.n,
        max_time=float(sample.times[top]),
        max_time_censored=bool(sample.status[top] == 0),
    )
