"""
参数化基准核的网格搜索

形状参数走网格，每个网格点上先用单位 Y 的核算出归一化冲击变化，
再对观测的一步收益变化做过原点最小二乘得到 Y。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from core.errors import EstimationError
from core.kernels import KernelTensor, ParametricKernel, eval_parametric, impact_h, sample_to_tensor
from core.scheduler import TaskScheduler, resolve_scheduler
from core.types import KernelFamily
from market.data import NormalizedEpisode

from .metrics import EpisodeSource, as_normalized

logger = logging.getLogger(__name__)

HALF_LIFE_RANGE = (30.0, 720_000.0)
TAU_RANGE = (10.0, 7_200.0)
LN2 = math.log(2.0)


def _geom(lo: float, hi: float, n: int) -> List[float]:
    return [float(x) for x in np.geomspace(lo, hi, n)]


@dataclass
class ParamGrid:
    """各参数族的网格（时间单位：秒）"""
    half_lives: List[float] = field(default_factory=lambda: _geom(*HALF_LIFE_RANGE, 24))
    two_exp_half_lives: List[float] = field(default_factory=lambda: _geom(*HALF_LIFE_RANGE, 12))
    two_exp_pairs: Optional[List[Tuple[float, float]]] = None
    betas: List[float] = field(default_factory=lambda: [float(b) for b in np.linspace(0.0, 1.0, 11)])
    taus: List[float] = field(default_factory=lambda: _geom(*TAU_RANGE, 12))

    def __post_init__(self):
        lo, hi = HALF_LIFE_RANGE
        lives = list(self.half_lives) + list(self.two_exp_half_lives)
        lives += [h for pair in (self.two_exp_pairs or []) for h in pair]
        if any(not (lo * (1 - 1e-9) <= h <= hi * (1 + 1e-9)) for h in lives):
            raise ValueError(f"half-lives must lie in [{lo:g}, {hi:g}] seconds")
        if any(not (0.0 <= b <= 1.0) for b in self.betas):
            raise ValueError("betas must lie in [0, 1]")
        if any(not (TAU_RANGE[0] * (1 - 1e-9) <= t <= TAU_RANGE[1] * (1 + 1e-9)) for t in self.taus):
            raise ValueError(f"taus must lie in [{TAU_RANGE[0]:g}, {TAU_RANGE[1]:g}] seconds")

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "ParamGrid":
        data = dict(raw or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid settings: {sorted(unknown)}")
        if data.get("two_exp_pairs") is not None:
            data["two_exp_pairs"] = [tuple(float(h) for h in pair) for pair in data["two_exp_pairs"]]
        return cls(**data)

    def points(self, family: KernelFamily) -> List[Dict[str, float]]:
        """按衰减由慢到快排序，同分时先出现的点获胜"""
        family = KernelFamily(family)
        if family is KernelFamily.ONE_EXP:
            rates = sorted(LN2 / h for h in self.half_lives)
            points = [{"rho": r} for r in rates]
        elif family is KernelFamily.TWO_EXP:
            if self.two_exp_pairs is not None:
                pairs = sorted((LN2 / a, LN2 / b) for a, b in self.two_exp_pairs)
                pairs = [(min(p), max(p)) for p in pairs]
            else:
                rates = sorted(LN2 / h for h in self.two_exp_half_lives)
                pairs = [(r1, r2) for i, r1 in enumerate(rates) for r2 in rates[i + 1:]]
            points = [{"rho1": r1, "rho2": r2} for r1, r2 in pairs]
        else:
            points = [
                {"beta": b, "tau": t}
                for b in sorted(self.betas)
                for t in sorted(self.taus, reverse=True)
            ]
        if not points:
            raise ValueError(f"grid for {family.value} is empty")
        return points


@dataclass
class ParametricFit:
    """网格搜索结果：d×d 参数核与训练 R²"""
    family: KernelFamily
    kernels: List[List[ParametricKernel]]
    shape: Dict[str, float]
    train_r2: float
    c_S: float
    c_X: float
    self_only: bool = True

    @property
    def d(self) -> int:
        return len(self.kernels)

    def to_tensor(self, M: int, bin_seconds: float, assets: Optional[Sequence[str]] = None) -> KernelTensor:
        return sample_to_tensor(self.kernels, bin_seconds, M, assets)

    def params(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "shape": self.shape,
            "Y": [[k.Y for k in row] for row in self.kernels],
            "w1": (
                [[k.w1 for k in row] for row in self.kernels] if self.family is KernelFamily.TWO_EXP else None
            ),
            "train_r2": self.train_r2,
        }


def _changes(arr: np.ndarray) -> np.ndarray:
    """沿 bin 轴的一步变化，首项相对 0"""
    return np.diff(arr, axis=1, prepend=0.0)


class _Precomputed:
    """与网格点无关的部分：变换后成交量与收益变化"""

    def __init__(self, episodes: Sequence[NormalizedEpisode], c_S: float, c_X: float):
        volumes = np.stack([ep.volumes for ep in episodes])  # (N, M, d)
        returns = np.stack([ep.returns for ep in episodes])
        self.M = volumes.shape[1]
        self.d = volumes.shape[2]
        self.bin_seconds = episodes[0].bin_seconds
        self.self_h = [impact_h(c_S, volumes[:, :, k]) for k in range(self.d)]
        self.cross_h = [impact_h(c_X, volumes[:, :, k]) for k in range(self.d)] if self.d > 1 else []
        self.targets = [_changes(returns[:, :, row]).reshape(-1) for row in range(self.d)]
        pooled = np.concatenate(self.targets)
        self.tss = float(np.sum((pooled - pooled.mean()) ** 2))

    def transformed(self, row: int, col: int) -> np.ndarray:
        return self.self_h[col] if row == col else self.cross_h[col]

    def regressor(self, row: int, col: int, unit: np.ndarray) -> np.ndarray:
        """单位核下 (ℓ,k) 对的一步冲击变化"""
        conv = fftconvolve(self.transformed(row, col), unit[None, :], axes=1)[:, :self.M]
        return _changes(conv).reshape(-1)


def _unit_kernel(family: KernelFamily, shape: Dict[str, float], w1: float = 0.5) -> ParametricKernel:
    if family is KernelFamily.TWO_EXP:
        return ParametricKernel(family, Y=1.0, w1=w1, **shape)
    return ParametricKernel(family, Y=1.0, **shape)


def _row_fit(target: np.ndarray, columns: List[np.ndarray]) -> Tuple[np.ndarray, float]:
    X = np.column_stack(columns)
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ coef
    return coef, float(resid @ resid)


def _fit_point(
    pre: _Precomputed, family: KernelFamily, shape: Dict[str, float], pairs: List[List[int]]
) -> Tuple[float, List[List[ParametricKernel]]]:
    lags = np.arange(pre.M, dtype=float) * pre.bin_seconds
    rss = 0.0
    grid: List[List[Optional[ParametricKernel]]] = [[None] * pre.d for _ in range(pre.d)]
    for row in range(pre.d):
        cols = pairs[row]
        if family is KernelFamily.TWO_EXP:
            first = eval_parametric(ParametricKernel(KernelFamily.ONE_EXP, rho=shape["rho1"]), lags)
            second = eval_parametric(ParametricKernel(KernelFamily.ONE_EXP, rho=shape["rho2"]), lags)
            regs = []
            for col in cols:
                regs += [pre.regressor(row, col, first), pre.regressor(row, col, second)]
            coef, _ = _row_fit(pre.targets[row], regs)
            weights = []
            for j in range(len(cols)):
                a, b = coef[2 * j], coef[2 * j + 1]
                weights.append(float(np.clip(a / (a + b), 0.0, 1.0)) if a + b != 0 else 0.5)
            combined = [w * regs[2 * j] + (1.0 - w) * regs[2 * j + 1] for j, w in enumerate(weights)]
            Y, row_rss = _row_fit(pre.targets[row], combined)
            for j, col in enumerate(cols):
                grid[row][col] = ParametricKernel(family, Y=float(Y[j]), w1=weights[j], **shape)
        else:
            unit = eval_parametric(_unit_kernel(family, shape), lags)
            Y, row_rss = _row_fit(pre.targets[row], [pre.regressor(row, col, unit) for col in cols])
            for j, col in enumerate(cols):
                grid[row][col] = ParametricKernel(family, Y=float(Y[j]), **shape)
        rss += row_rss
    for row in range(pre.d):
        for col in range(pre.d):
            if grid[row][col] is None:
                grid[row][col] = _unit_kernel(family, shape).with_scale(0.0)
    return 1.0 - rss / pre.tss, grid


def fit_parametric(
    train: EpisodeSource,
    family: KernelFamily,
    grid: Optional[ParamGrid] = None,
    c_S: float = 0.5,
    c_X: float = 0.5,
    self_only: bool = True,
    scheduler: Optional[TaskScheduler] = None,
) -> ParametricFit:
    """训练集上一步 R² 最大的网格点获胜"""
    family = KernelFamily(family)
    grid = grid or ParamGrid()
    episodes = as_normalized(train)
    if not episodes:
        raise EstimationError("empty training data")
    pre = _Precomputed(episodes, c_S, c_X)
    if pre.tss == 0:
        raise EstimationError("training returns have zero variance")
    pairs = [[row] if self_only else list(range(pre.d)) for row in range(pre.d)]

    points = grid.points(family)
    results = resolve_scheduler(scheduler).map(lambda shape: _fit_point(pre, family, shape, pairs), points)
    best = 0
    for idx in range(1, len(results)):
        if results[idx][0] > results[best][0]:
            best = idx
    r2, kernels = results[best]
    logger.info(
        f"{family.value} grid search over {len(points)} points: best {points[best]} (train R2 {r2:.4f})"
    )
    return ParametricFit(family, kernels, dict(points[best]), float(r2), c_S, c_X, self_only)
