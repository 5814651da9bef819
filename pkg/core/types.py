"""
核心类型定义 - 枚举与轻量数据结构
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np


class KernelFamily(str, Enum):
    """参数化传播核族"""
    ONE_EXP = "1exp"
    TWO_EXP = "2exp"
    POWER = "power"


class ModelKind(str, Enum):
    """评估用的模型类型"""
    ONE_EXP = "1exp"
    TWO_EXP = "2exp"
    POWER = "power"
    RAW = "raw"
    PROJ = "proj"
    CROSS_RAW = "cross_raw"
    CROSS_PROJ = "cross_proj"

    @property
    def is_parametric(self) -> bool:
        return self in PARAMETRIC_KINDS

    @property
    def family(self) -> Optional[KernelFamily]:
        if not self.is_parametric:
            return None
        return KernelFamily(self.value)

    @classmethod
    def parse(cls, name: str) -> "ModelKind":
        key = name.strip().lower().replace("-", "_")
        aliases = {"one_exp": "1exp", "two_exp": "2exp", "1_exp": "1exp", "2_exp": "2exp"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown model kind: {name}") from None


PARAMETRIC_KINDS = {ModelKind.ONE_EXP, ModelKind.TWO_EXP, ModelKind.POWER}

# 这些模型带形状约束投影
PROJECTED_KINDS = {ModelKind.PROJ, ModelKind.CROSS_PROJ}


class FlowKind(str, Enum):
    """模拟器的订单流类型"""
    SPARSE_METAORDER = "sparse_metaorder"
    AUTOCORRELATED_FLOW = "autocorrelated_flow"
    IMPULSE = "impulse"


class ImpactWindow(str, Enum):
    """峰值冲击的测量窗口"""
    BIN = "bin"
    TICK = "tick"


@dataclass
class TradeSchedule:
    """带时间戳的有符号交易量序列"""
    times: np.ndarray  # (L,)
    volumes: np.ndarray  # (L, d)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        volumes = np.asarray(self.volumes, dtype=float)
        if volumes.ndim == 1:
            volumes = volumes[:, None]
        self.volumes = volumes
        if self.times.ndim != 1 or len(self.times) != volumes.shape[0]:
            raise ValueError("times and volumes must have the same length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        if not np.any(volumes != 0):
            raise ValueError("schedule must contain at least one nonzero volume")

    @property
    def d(self) -> int:
        return self.volumes.shape[1]

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class CostReport:
    """执行成本及其 (ℓ,k) 分解"""
    total_cost: float
    per_pair: np.ndarray  # (d, d)

    def to_dict(self) -> Dict[str, Any]:
        return {"total_cost": self.total_cost, "per_pair": self.per_pair.tolist()}
