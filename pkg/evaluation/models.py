"""
模型注册表：ModelKind → 拟合函数
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from core.kernels import KernelTensor
from core.scheduler import TaskScheduler
from core.types import PROJECTED_KINDS, ModelKind
from estimator.gram import LambdaLike
from estimator.pipeline import EstimateSettings, estimate
from market.data import NormalizedEpisode
from projection.admm import ProjectionSettings

from .metrics import horizon_r2, predict_returns
from .parametric import ParamGrid, fit_parametric

logger = logging.getLogger(__name__)


@dataclass
class ModelSpec:
    """一个待评估模型：类型、凹性参数与网格"""
    kind: ModelKind
    c_S: float = 0.5
    c_X: float = 0.5
    grid: ParamGrid = field(default_factory=ParamGrid)
    lam: LambdaLike = None
    projection: ProjectionSettings = field(default_factory=ProjectionSettings)
    self_only: Optional[bool] = None

    def __post_init__(self):
        if not isinstance(self.kind, ModelKind):
            self.kind = ModelKind.parse(str(self.kind))
        for name in ("c_S", "c_X"):
            if not (0.0 < getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1]")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def uses_cross(self) -> bool:
        """参数族与 RAW/PROJ 默认只拟合自冲击块"""
        if self.self_only is not None:
            return not self.self_only
        return self.kind in (ModelKind.CROSS_RAW, ModelKind.CROSS_PROJ)

    def with_concavity(self, c_S: float, c_X: float) -> "ModelSpec":
        return ModelSpec(self.kind, c_S, c_X, self.grid, self.lam, self.projection, self.self_only)


@dataclass
class FittedModel:
    """训练好的模型，统一以 KernelTensor 表示"""
    spec: ModelSpec
    kernel: KernelTensor
    params: Dict[str, Any] = field(default_factory=dict)
    converged: bool = True

    def predict(self, episode: NormalizedEpisode, horizon: int):
        return predict_returns(self.kernel, self.spec.c_S, self.spec.c_X, episode, horizon)

    def r2(self, episodes: Sequence[NormalizedEpisode], horizon: int) -> float:
        return horizon_r2(self.kernel, self.spec.c_S, self.spec.c_X, episodes, horizon)


Fitter = Callable[[Sequence[NormalizedEpisode], ModelSpec, Optional[TaskScheduler]], FittedModel]


class ModelRegistry:
    """模型注册表"""

    def __init__(self):
        self._fitters: Dict[ModelKind, Fitter] = {}

    def register(self, kind: ModelKind, fitter: Fitter) -> None:
        """注册拟合函数"""
        self._fitters[ModelKind(kind)] = fitter

    def unregister(self, kind: ModelKind) -> None:
        self._fitters.pop(ModelKind(kind), None)

    def get(self, kind: ModelKind) -> Optional[Fitter]:
        return self._fitters.get(ModelKind(kind))

    def kinds(self) -> List[ModelKind]:
        return list(self._fitters)

    def fit(
        self,
        spec: ModelSpec,
        train: Sequence[NormalizedEpisode],
        scheduler: Optional[TaskScheduler] = None,
    ) -> FittedModel:
        fitter = self.get(spec.kind)
        if fitter is None:
            raise KeyError(f"no fitter registered for model {spec.kind.value}")
        return fitter(train, spec, scheduler)

    def __contains__(self, kind) -> bool:
        try:
            return ModelKind(kind) in self._fitters
        except ValueError:
            return False

    def __len__(self) -> int:
        return len(self._fitters)


def _fit_parametric_model(train, spec: ModelSpec, scheduler=None) -> FittedModel:
    fit = fit_parametric(train, spec.kind.family, spec.grid, spec.c_S, spec.c_X,
                         self_only=not spec.uses_cross, scheduler=scheduler)
    first = train[0]
    kernel = fit.to_tensor(first.M, first.bin_seconds, first.assets)
    return FittedModel(spec, kernel, fit.params())


def _fit_nonparametric(train, spec: ModelSpec, scheduler=None) -> FittedModel:
    settings = EstimateSettings(
        c_S=spec.c_S,
        c_X=spec.c_X,
        lam=spec.lam,
        project=spec.kind in PROJECTED_KINDS,
        self_only=not spec.uses_cross,
        projection=spec.projection,
    )
    result = estimate(train, settings, scheduler)
    params: Dict[str, Any] = {"lambda": result.lam}
    if result.proj is not None:
        params["projection"] = result.proj.report()
    return FittedModel(spec, result.kernel, params, result.converged)


def default_registry() -> ModelRegistry:
    registry = ModelRegistry()
    for kind in ModelKind:
        registry.register(kind, _fit_parametric_model if kind.is_parametric else _fit_nonparametric)
    return registry
