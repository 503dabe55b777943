"""
モデルの保存と読み込み
Nelson-Aalen・セミパラメトリック・集約モデルを共通のJSON文書として扱う
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel

from .aggregation import AggregateModel, aggregate_curve, aggregate_quantile, aggregate_survival
from .cox_fit import CoxFit, StepFunction, survival_at
from .errors import DataError, DomainError
from .manifest import RunManifest
from .tail_model import (
    SemiParamModel,
    TailFit,
    curve_frame,
    nelson_aalen_quantile,
    risk_multiplier,
    semiparam_quantile,
    semiparam_survival,
    survival_curve,
)
from .threshold_select import ThresholdSelection

logger = logging.getLogger(__name__)

FittedModel = Union[CoxFit, SemiParamModel, AggregateModel]


class BaselineDocument(BaseModel):
    """Ĥ₀ の節点と値"""
    knots: List[float]
    cum_hazard: List[float]


class ComponentDocument(BaseModel):
    """パレート裾の成分"""
    tau: float
    theta: float
    weight: float = 1.0
    n_tau: int
    s0_at_tau: float
    numerator: float


class ModelDocument(BaseModel):
    """モデルファイル"""
    kind: Literal["nelson_aalen", "semiparametric", "aggregate"]
    beta: List[float]
    covariate_names: List[str] = []
    baseline: BaselineDocument
    components: List[ComponentDocument] = []
    selection: Optional[ThresholdSelection] = None
    manifest: Optional[RunManifest] = None


class CriticalValueDocument(BaseModel):
    """較正済み臨界値 D のファイル"""
    critical_value: float
    n: int
    quantile: float
    n_mc: int
    seed: int
    theta: float = 1.0
    censoring_theta: Optional[float] = None
    manifest: Optional[RunManifest] = None


class SelectionReport(BaseModel):
    """閾値選択レポートのファイル"""
    selection: ThresholdSelection
    manifest: Optional[RunManifest] = None


def _component(tail: TailFit, weight: float) -> ComponentDocument:
    return ComponentDocument(
        tau=tail.tau, theta=tail.theta, weight=weight, n_tau=tail.n_tau, s0_at_tau=tail.s0_at_tau, numerator=tail.numerator
    )


def to_document(
    model: FittedModel,
    covariate_names=(),
    selection: Optional[ThresholdSelection] = None,
    manifest: Optional[RunManifest] = None,
) -> ModelDocument:
    """推定済みモデルを文書に変換"""
    if isinstance(model, AggregateModel):
        kind, cox = "aggregate", model.cox
        components = [_component(tail, float(w)) for tail, w in zip(model.components, model.weights)]
    elif isinstance(model, SemiParamModel):
        kind, cox = "semiparametric", model.cox
        components = [_component(model.tail, 1.0)]
    else:
        kind, cox, components = "nelson_aalen", model, []

    return ModelDocument(
        kind=kind,
        beta=np.asarray(cox.beta, dtype=float).tolist(),
        covariate_names=list(covariate_names),
        baseline=BaselineDocument(knots=cox.knots.tolist(), cum_hazard=np.asarray(cox.cum_hazard.values).tolist()),
        components=components,
        selection=selection,
        manifest=manifest,
    )


def from_document(document: ModelDocument) -> FittedModel:
    """文書から推定済みモデルを復元"""
    knots = np.asarray(document.baseline.knots, dtype=float)
    cum = np.asarray(document.baseline.cum_hazard, dtype=float)
    if knots.shape != cum.shape:
        raise DataError("baseline の knots と cum_hazard の長さが一致しません")
    increments = np.diff(cum, prepend=0.0)
    cox = CoxFit(np.asarray(document.beta, dtype=float), knots, increments, StepFunction(knots, cum))

    tails = [TailFit(c.tau, c.theta, c.n_tau, c.s0_at_tau, c.numerator) for c in document.components]
    if document.kind == "nelson_aalen":
        return cox
    if not tails:
        raise DataError(f"{document.kind} モデルに成分がありません")
    if document.kind == "semiparametric":
        return SemiParamModel(cox, tails[0])
    return AggregateModel(cox, tuple(tails), np.array([c.weight for c in document.components]))


def save_document(path, document: BaseModel) -> None:
    Path(path).write_text(document.model_dump_json(indent=2), encoding="utf-8")
    logger.info("保存しました: %s", path)


def load_model(path) -> ModelDocument:
    """モデルファイルを読み込む（スキーマ違反は ValidationError）"""
    return ModelDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))


def load_critical_value(value: str) -> float:
    """数値、または較正ファイル（D.json）のパスから D を得る"""
    try:
        return float(value)
    except ValueError:
        pass
    path = Path(value)
    if not path.exists():
        raise DataError(f"臨界値ファイルがありません: {value}")
    data = json.loads(path.read_text(encoding="utf-8"))
    return CriticalValueDocument.model_validate(data).critical_value


def model_survival(model: FittedModel, z, x):
    """モデルの種類に応じた Ŝ(x|z)"""
    if isinstance(model, AggregateModel):
        return aggregate_survival(model, z, x)
    if isinstance(model, SemiParamModel):
        return semiparam_survival(model, z, x)
    value = survival_at(model, z, x)
    return float(value) if np.ndim(value) == 0 else value


def model_quantile(model: FittedModel, z, p: float) -> Optional[float]:
    """モデルの種類に応じた分位点（階段推定量で届かなければ None）"""
    if isinstance(model, AggregateModel):
        return aggregate_quantile(model, z, p)
    if isinstance(model, SemiParamModel):
        return semiparam_quantile(model, z, p)
    return nelson_aalen_quantile(model, z, p)


def model_curve(model: FittedModel, z, grid):
    if isinstance(model, AggregateModel):
        return aggregate_curve(model, z, grid)
    if isinstance(model, SemiParamModel):
        return survival_curve(model, z, grid)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0):
        raise DomainError("x は 0 以上である必要があります")
    return curve_frame(grid, risk_multiplier(model.beta, z) * model.cum_hazard(grid))
