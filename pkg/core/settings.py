"""
运行配置的 schema 校验（pydantic），未知字段一律拒绝
"""
from typing import Annotated, Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

Concavity = Annotated[float, Field(gt=0.0, le=1.0)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Section):
    """输入数据与归一化"""
    episodes: Optional[str] = None
    normalized: Optional[str] = None
    ticks: Optional[str] = None
    schema_map: Optional[Dict[str, str]] = None
    bin_seconds: int = Field(default=300, gt=0)
    M: Optional[int] = Field(default=None, gt=0)
    assets: Optional[List[str]] = None
    market_portfolio: bool = False
    eps_sigma: float = Field(default=1e-12, gt=0.0)
    cap_factor: float = Field(default=100.0, gt=0.0)
    max_window: int = Field(default=20, gt=0)


class ProjectionSection(_Section):
    tol_primal: float = Field(default=1e-8, gt=0.0)
    tol_dual: float = Field(default=1e-8, gt=0.0)
    max_iter: int = Field(default=20000, ge=1)
    penalty: float = Field(default=1.0, gt=0.0)
    symmetry_flag: bool = False
    relaxation: float = Field(default=1.6, gt=0.0, lt=2.0)
    balance_every: int = Field(default=50, ge=0)
    balance_ratio: float = Field(default=10.0, gt=1.0)


class SimulateSection(_Section):
    M: int = Field(default=20, gt=0)
    d: int = Field(default=1, gt=0)
    N: int = Field(default=1000, gt=0)
    bin_seconds: int = Field(default=300, gt=0)
    truth: Optional[List[List[Dict[str, Any]]]] = None
    c_S: Concavity = 0.5
    c_X: Concavity = 0.5
    noise_R: float = Field(default=1.0, ge=0.0)
    flow: str = "autocorrelated_flow"
    metaorder_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    size_mu: float = 0.0
    size_sigma: float = Field(default=1.0, ge=0.0)
    flip_prob: float = Field(default=0.2, gt=0.0, lt=1.0)
    ar1: float = Field(default=0.0, gt=-1.0, lt=1.0)
    cross_ratio: float = 0.3
    liquidity_ratio: float = Field(default=1.0, gt=0.0)
    price_level: float = Field(default=100.0, gt=0.0)
    assets: Optional[List[str]] = None
    ticks: Optional[Dict[str, Any]] = None

    @field_validator("flow")
    @classmethod
    def _known_flow(cls, value: str) -> str:
        allowed = {"sparse_metaorder", "autocorrelated_flow", "impulse"}
        if value not in allowed:
            raise ValueError(f"flow must be one of {sorted(allowed)}")
        return value


class EstimateSection(_Section):
    c_S: Concavity = 0.5
    c_X: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    lam: Optional[Union[float, List[List[float]]]] = None
    lambda_grid: Optional[List[float]] = None
    project: bool = True
    self_only: bool = False
    R: Optional[float] = Field(default=None, gt=0.0)
    delta: float = Field(default=0.05, gt=0.0, lt=1.0)
    truth: Optional[str] = None


class ProxySection(_Section):
    N_T: Optional[Union[int, Dict[str, int]]] = None
    min_children: int = Field(default=4, ge=1)
    target_length: float = Field(default=10.0, gt=2.0)
    window: str = "bin"
    min_points: int = Field(default=50, ge=2)
    session_open_seconds: int = Field(default=34_200, ge=0)
    session_seconds: int = Field(default=23_400, gt=0)
    ids_file: Optional[str] = None
    fit: bool = True

    @field_validator("window")
    @classmethod
    def _known_window(cls, value: str) -> str:
        if value not in ("bin", "tick"):
            raise ValueError("window must be bin or tick")
        return value


class GridSection(_Section):
    half_lives: Optional[List[float]] = None
    two_exp_half_lives: Optional[List[float]] = None
    two_exp_pairs: Optional[List[List[float]]] = None
    betas: Optional[List[float]] = None
    taus: Optional[List[float]] = None

    def as_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class FitSection(_Section):
    family: str = "1exp"
    c_S: Concavity = 0.5
    c_X: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    self_only: bool = True
    grid: GridSection = Field(default_factory=GridSection)


class EvaluateSection(_Section):
    models: List[str] = Field(default_factory=lambda: ["1exp", "power", "proj"])
    horizons: List[int] = Field(default_factory=lambda: [1])
    c_S: Concavity = 0.5
    c_X: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    train_days: int = Field(default=21, ge=1)
    test_days: int = Field(default=21, ge=1)
    full_sample: bool = False
    lam: Optional[float] = Field(default=None, gt=0.0)
    rebin_factors: Optional[List[int]] = None
    kernel_shapes: bool = False
    grid: GridSection = Field(default_factory=GridSection)

    @field_validator("horizons")
    @classmethod
    def _positive_horizons(cls, value: List[int]) -> List[int]:
        if not value or any(h < 1 for h in value):
            raise ValueError("horizons must be a nonempty list of positive integers")
        return value


class SweepSection(_Section):
    model: str = "proj"
    c_grid: List[float] = Field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 11)])
    fix: str = "c_X"
    horizon: int = Field(default=1, ge=1)
    c_S: Concavity = 0.5
    c_X: Concavity = 0.5
    rolling: bool = False

    @field_validator("c_grid")
    @classmethod
    def _grid_in_range(cls, value: List[float]) -> List[float]:
        if not value or any(not (0.0 < c <= 1.0) for c in value):
            raise ValueError("c_grid values must lie in (0, 1]")
        return value

    @field_validator("fix")
    @classmethod
    def _known_fix(cls, value: str) -> str:
        if value not in ("c_S", "c_X", "both"):
            raise ValueError("fix must be c_S, c_X or both")
        return value


class ManipulateSection(_Section):
    kernel: Optional[str] = None
    c: Concavity = 0.5
    bin_seconds: float = Field(default=1.0, gt=0.0)
    max_halvings: int = Field(default=60, ge=1)


class RunConfig(_Section):
    """一次运行的完整配置"""
    seed: int = 0
    threads: Optional[int] = Field(default=None, ge=1)
    output_dir: str = "outputs"
    max_problem_size: int = Field(default=20_000, gt=0)
    data: DataSection = Field(default_factory=DataSection)
    projection: ProjectionSection = Field(default_factory=ProjectionSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    estimate: EstimateSection = Field(default_factory=EstimateSection)
    proxy: ProxySection = Field(default_factory=ProxySection)
    fit: FitSection = Field(default_factory=FitSection)
    evaluate: EvaluateSection = Field(default_factory=EvaluateSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    manipulate: ManipulateSection = Field(default_factory=ManipulateSection)


def validate_config(raw: Dict[str, Any]) -> RunConfig:
    """校验配置字典，失败时抛出带字段路径的 ConfigError"""
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        path = ".".join(str(p) for p in first["loc"])
        raise ConfigError(first["msg"], path) from None
