"""
传播核、冲击函数与可容许性检查
"""
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .types import KernelFamily

logger = logging.getLogger(__name__)


def impact_h(c: float, x):
    """h_c(x) = sgn(x)|x|^c，对标量和数组都适用"""
    if not (0.0 < c <= 1.0):
        raise ValueError(f"concavity exponent must lie in (0, 1], got {c}")
    if np.isscalar(x):
        return math.copysign(abs(x) ** c, x) if x != 0 else 0.0
    arr = np.asarray(x, dtype=float)
    if c == 1.0:
        return arr.copy()
    return np.sign(arr) * np.abs(arr) ** c


@dataclass(frozen=True)
class ImpactFunction:
    """单参数凹冲击函数"""
    c: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.c <= 1.0):
            raise ValueError(f"concavity exponent must lie in (0, 1], got {self.c}")

    def __call__(self, x):
        return impact_h(self.c, x)

    def apply(self, x) -> np.ndarray:
        return impact_h(self.c, np.asarray(x, dtype=float))

    @property
    def is_linear(self) -> bool:
        return self.c == 1.0


@dataclass(frozen=True)
class ImpactPair:
    """自冲击用 c_S，交叉冲击用 c_X"""
    c_S: float = 1.0
    c_X: float = 1.0

    def __post_init__(self):
        for name in ("c_S", "c_X"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {value}")

    def exponent(self, row: int, col: int) -> float:
        return self.c_S if row == col else self.c_X

    def function(self, row: int, col: int) -> ImpactFunction:
        return ImpactFunction(self.exponent(row, col))

    @classmethod
    def coerce(cls, h: Union["ImpactPair", ImpactFunction, float]) -> "ImpactPair":
        if isinstance(h, ImpactPair):
            return h
        if isinstance(h, ImpactFunction):
            return cls(h.c, h.c)
        return cls(float(h), float(h))


@dataclass(frozen=True)
class ParametricKernel:
    """参数化核：1-EXP (ρ) / 2-EXP (w₁,ρ₁,ρ₂) / POWER (β,τ)，时间单位为秒"""
    family: KernelFamily
    Y: float = 1.0
    rho: Optional[float] = None
    w1: Optional[float] = None
    rho1: Optional[float] = None
    rho2: Optional[float] = None
    beta: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not math.isfinite(self.Y):
            raise ValueError("kernel scale Y must be finite")
        if self.family is KernelFamily.ONE_EXP:
            _require_positive("rho", self.rho)
        elif self.family is KernelFamily.TWO_EXP:
            _require_positive("rho1", self.rho1)
            _require_positive("rho2", self.rho2)
            if self.w1 is None or not (0.0 <= self.w1 <= 1.0):
                raise ValueError(f"w1 must lie in [0, 1], got {self.w1}")
        else:
            if self.beta is None or not (0.0 <= self.beta <= 1.0):
                raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
            _require_positive("tau", self.tau)

    def __call__(self, lag_seconds):
        return eval_parametric(self, lag_seconds)

    def with_scale(self, Y: float) -> "ParametricKernel":
        data = self.to_dict()
        data["Y"] = float(Y)
        return ParametricKernel.from_dict(data)

    def shape_params(self) -> Dict[str, float]:
        names = {
            KernelFamily.ONE_EXP: ("rho",),
            KernelFamily.TWO_EXP: ("w1", "rho1", "rho2"),
            KernelFamily.POWER: ("beta", "tau"),
        }[self.family]
        return {name: getattr(self, name) for name in names}

    def to_dict(self) -> Dict[str, Any]:
        data = {"family": self.family.value, "Y": self.Y}
        data.update(self.shape_params())
        return data

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ParametricKernel":
        data = dict(raw)
        family = KernelFamily(data.pop("family"))
        kwargs = {k: float(v) for k, v in data.items() if v is not None}
        return cls(family=family, **kwargs)

    @classmethod
    def from_half_life(cls, half_life_seconds: float, Y: float = 1.0) -> "ParametricKernel":
        return cls(KernelFamily.ONE_EXP, Y=Y, rho=math.log(2.0) / half_life_seconds)


def _require_positive(name: str, value: Optional[float]) -> None:
    if value is None or not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def eval_parametric(k: ParametricKernel, lag_seconds):
    """在给定滞后（秒）上求参数核的值"""
    t = np.asarray(lag_seconds, dtype=float)
    if np.any(t < 0):
        raise ValueError("lag must be nonnegative")
    if k.family is KernelFamily.ONE_EXP:
        out = k.Y * np.exp(-k.rho * t)
    elif k.family is KernelFamily.TWO_EXP:
        out = k.Y * (k.w1 * np.exp(-k.rho1 * t) + (1.0 - k.w1) * np.exp(-k.rho2 * t))
    else:
        out = k.Y * (t + k.tau) ** (-k.beta)
    return float(out) if out.ndim == 0 else out


KernelGrid = Sequence[Sequence[ParametricKernel]]


@dataclass
class KernelTensor:
    """M×d×d 传播核；values[i, ℓ, k] = G^{(ℓ,k)}_i

    vec() 的顺序：ℓ 最慢，其次滞后 i，k 最快。
    """
    values: np.ndarray
    bin_seconds: Optional[float] = None
    assets: Optional[Tuple[str, ...]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError(f"kernel values must have shape (M, d, d), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("kernel values must be finite")
        self.values = values
        if self.assets is not None:
            self.assets = tuple(str(a) for a in self.assets)
            if len(self.assets) != values.shape[1]:
                raise ValueError("asset labels do not match kernel dimension")

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def vec(self) -> np.ndarray:
        return self.values.transpose(1, 0, 2).reshape(-1).copy()

    @classmethod
    def from_vec(cls, v: np.ndarray, M: int, d: int, **kwargs) -> "KernelTensor":
        v = np.asarray(v, dtype=float)
        if v.shape != (M * d * d,):
            raise ValueError(f"vector length {v.shape} does not match M*d^2 = {M * d * d}")
        return cls(v.reshape(d, M, d).transpose(1, 0, 2).copy(), **kwargs)

    @classmethod
    def zeros(cls, M: int, d: int, **kwargs) -> "KernelTensor":
        return cls(np.zeros((M, d, d)), **kwargs)

    def like(self, values: np.ndarray, **metadata) -> "KernelTensor":
        """保持 bin_seconds 和资产标签，替换数值"""
        meta = dict(self.metadata)
        meta.update(metadata)
        return KernelTensor(values, bin_seconds=self.bin_seconds, assets=self.assets, metadata=meta)

    def scale(self, alpha: float) -> "KernelTensor":
        return self.like(alpha * self.values)

    def symmetric_parts(self) -> np.ndarray:
        return 0.5 * (self.values + self.values.transpose(0, 2, 1))

    def asset_labels(self) -> List[str]:
        if self.assets is not None:
            return list(self.assets)
        return [str(i) for i in range(self.d)]

    # ---- 序列化 ----

    def to_frame(self) -> pd.DataFrame:
        labels = self.asset_labels()
        lag, row, col = np.meshgrid(
            np.arange(self.M), np.arange(self.d), np.arange(self.d), indexing="ij"
        )
        return pd.DataFrame({
            "lag": lag.ravel(),
            "row_asset": [labels[i] for i in row.ravel()],
            "col_asset": [labels[i] for i in col.ravel()],
            "value": self.values.ravel(),
        })

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    @classmethod
    def from_csv(cls, path: Union[str, Path], bin_seconds: Optional[float] = None) -> "KernelTensor":
        frame = pd.read_csv(
            path, dtype={"row_asset": str, "col_asset": str}, float_precision="round_trip"
        )
        missing = {"lag", "row_asset", "col_asset", "value"} - set(frame.columns)
        if missing:
            raise ValueError(f"kernel CSV missing columns: {sorted(missing)}")
        labels = list(dict.fromkeys(list(frame["row_asset"]) + list(frame["col_asset"])))
        index = {label: i for i, label in enumerate(labels)}
        M = int(frame["lag"].max()) + 1
        d = len(labels)
        values = np.zeros((M, d, d))
        values[
            frame["lag"].to_numpy(int),
            frame["row_asset"].map(index).to_numpy(int),
            frame["col_asset"].map(index).to_numpy(int),
        ] = frame["value"].to_numpy(float)
        return cls(values, bin_seconds=bin_seconds, assets=tuple(labels))

    def to_json(self, path: Union[str, Path]) -> None:
        payload = {
            "M": self.M,
            "d": self.d,
            "bin_seconds": self.bin_seconds,
            "assets": self.asset_labels(),
            "values": self.values.tolist(),
            "metadata": self.metadata,
        }
        Path(path).write_text(json.dumps(payload, indent=2, default=json_default), encoding="utf-8")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "KernelTensor":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        values = np.asarray(payload["values"], dtype=float)
        if values.shape != (payload["M"], payload["d"], payload["d"]):
            raise ValueError("kernel JSON values do not match the declared M and d")
        return cls(
            values,
            bin_seconds=payload.get("bin_seconds"),
            assets=tuple(payload["assets"]) if payload.get("assets") else None,
            metadata=payload.get("metadata") or {},
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "KernelTensor":
        """按扩展名选择 JSON 或 CSV"""
        if str(path).lower().endswith(".json"):
            return cls.from_json(path)
        return cls.from_csv(path)


def json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def coerce_kernel_grid(kernels: Union[ParametricKernel, KernelGrid]) -> List[List[ParametricKernel]]:
    if isinstance(kernels, ParametricKernel):
        return [[kernels]]
    grid = [list(row) for row in kernels]
    d = len(grid)
    if d == 0 or any(len(row) != d for row in grid):
        raise ValueError("parametric kernel grid must be square")
    return grid


def sample_to_tensor(
    kernels: Union[ParametricKernel, KernelGrid],
    bin_seconds: float,
    M: int,
    assets: Optional[Sequence[str]] = None,
) -> KernelTensor:
    """G_i := kernel(i·bin_seconds)"""
    grid = coerce_kernel_grid(kernels)
    d = len(grid)
    lags = np.arange(M, dtype=float) * bin_seconds
    values = np.empty((M, d, d))
    for row in range(d):
        for col in range(d):
            values[:, row, col] = eval_parametric(grid[row][col], lags)
    metadata = {"parametric": [[k.to_dict() for k in row] for row in grid]}
    return KernelTensor(
        values, bin_seconds=bin_seconds, assets=tuple(assets) if assets else None, metadata=metadata
    )


@dataclass
class AdmissibilityReport:
    """可容许性检查结果"""
    nonneg: bool
    nonincreasing: bool
    convex: bool
    worst: Dict[str, float]
    worst_lag: Dict[str, Optional[int]]
    symmetric: Optional[bool] = None

    @property
    def admissible(self) -> bool:
        flags = [self.nonneg, self.nonincreasing, self.convex]
        if self.symmetric is not None:
            flags.append(self.symmetric)
        return all(flags)

    def __bool__(self) -> bool:
        return self.admissible

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nonneg": self.nonneg,
            "nonincreasing": self.nonincreasing,
            "convex": self.convex,
            "symmetric": self.symmetric,
            "worst": self.worst,
            "worst_lag": self.worst_lag,
        }


def constraint_blocks(values: np.ndarray) -> Dict[str, np.ndarray]:
    """三个约束族对应的矩阵序列：G_i, G_i−G_{i+1}, G_i−2G_{i+1}+G_{i+2}"""
    return {
        "nonneg": values,
        "nonincreasing": values[:-1] - values[1:],
        "convex": values[:-2] - 2.0 * values[1:-1] + values[2:],
    }


def min_sym_eigenvalues(blocks: np.ndarray) -> np.ndarray:
    if blocks.shape[0] == 0:
        return np.zeros(0)
    sym = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    return np.linalg.eigvalsh(sym)[:, 0]


def admissibility_check(
    K: Union[KernelTensor, np.ndarray], tol: float = 0.0, symmetric: bool = False
) -> AdmissibilityReport:
    """对称部分半正定、非增、凸三项检查"""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    values = K.values if isinstance(K, KernelTensor) else KernelTensor(K).values
    flags: Dict[str, bool] = {}
    worst: Dict[str, float] = {}
    worst_lag: Dict[str, Optional[int]] = {}
    for name, blocks in constraint_blocks(values).items():
        eig = min_sym_eigenvalues(blocks)
        if eig.size == 0:
            flags[name], worst[name], worst_lag[name] = True, 0.0, None
            continue
        lag = int(np.argmin(eig))
        worst[name] = float(min(eig[lag], 0.0))
        worst_lag[name] = lag if eig[lag] < 0 else None
        flags[name] = bool(eig[lag] >= -tol)
    sym_flag = None
    if symmetric:
        asym = np.abs(values - values.transpose(0, 2, 1)).max(initial=0.0)
        worst["symmetric"] = float(asym)
        sym_flag = bool(asym <= tol)
    return AdmissibilityReport(
        nonneg=flags["nonneg"],
        nonincreasing=flags["nonincreasing"],
        convex=flags["convex"],
        worst=worst,
        worst_lag=worst_lag,
        symmetric=sym_flag,
    )
