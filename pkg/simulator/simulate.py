"""
合成数据生成：已知真实传播核的 episode 与逐笔成交流
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.kernels import KernelTensor, ParametricKernel, sample_to_tensor
from core.scheduler import TaskScheduler, resolve_scheduler
from core.types import FlowKind, KernelFamily
from estimator.design import DesignOperator
from market.data import Dataset, Episode, NormalizedEpisode
from market.transforms import NS_PER_DAY, NS_PER_SECOND

logger = logging.getLogger(__name__)

BASE_DAY = pd.Timestamp("2020-01-01")


@dataclass
class SimConfig:
    """episode 模拟配置"""
    M: int = 20
    d: int = 1
    N: int = 1000
    bin_seconds: int = 300
    truth: Optional[List[List[Dict[str, Any]]]] = None
    c_S: float = 0.5
    c_X: float = 0.5
    noise_R: float = 1.0
    flow: FlowKind = FlowKind.AUTOCORRELATED_FLOW
    metaorder_prob: float = 0.5
    size_mu: float = 0.0
    size_sigma: float = 1.0
    flip_prob: float = 0.2
    ar1: float = 0.0
    cross_ratio: float = 0.3
    liquidity_ratio: float = 1.0
    price_level: float = 100.0
    assets: Optional[List[str]] = None
    seed: int = 0

    def __post_init__(self):
        self.flow = FlowKind(self.flow)
        for name in ("M", "d", "N", "bin_seconds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("c_S", "c_X"):
            if not (0.0 < getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.noise_R < 0:
            raise ValueError("noise_R must be nonnegative")
        if not (0.0 < self.flip_prob < 1.0):
            raise ValueError("flip_prob must lie in (0, 1)")
        if not (-1.0 < self.ar1 < 1.0):
            raise ValueError("ar1 must lie in (-1, 1)")
        if self.assets is not None and len(self.assets) != self.d:
            raise ValueError("assets must list d identifiers")

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "SimConfig":
        data = dict(raw or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown simulation settings: {sorted(unknown)}")
        return cls(**data)

    def asset_ids(self) -> List[str]:
        return list(self.assets) if self.assets else [f"A{k}" for k in range(self.d)]


def default_truth(cfg: SimConfig) -> List[List[ParametricKernel]]:
    """POWER(β=0.5, τ=1 个分箱)，交叉 Y = cross_ratio·Y_self，ℓ<k 方向乘以流动性比"""
    grid = []
    for row in range(cfg.d):
        line = []
        for col in range(cfg.d):
            Y = 1.0
            if row != col:
                Y = cfg.cross_ratio * (cfg.liquidity_ratio if row < col else 1.0)
            line.append(ParametricKernel(KernelFamily.POWER, Y=Y, beta=0.5, tau=float(cfg.bin_seconds)))
        grid.append(line)
    return grid


def truth_kernels(cfg: SimConfig) -> List[List[ParametricKernel]]:
    if cfg.truth is None:
        return default_truth(cfg)
    grid = [[ParametricKernel.from_dict(k) for k in row] for row in cfg.truth]
    if len(grid) != cfg.d or any(len(row) != cfg.d for row in grid):
        raise ValueError(f"truth grid must be {cfg.d}x{cfg.d}")
    return grid


def truth_tensor(cfg: SimConfig) -> KernelTensor:
    return sample_to_tensor(truth_kernels(cfg), cfg.bin_seconds, cfg.M, cfg.asset_ids())


def _flow(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    M, d = cfg.M, cfg.d
    volumes = np.zeros((M, d))
    if cfg.flow is FlowKind.IMPULSE:
        volumes[0, rng.integers(d)] = rng.choice([-1.0, 1.0])
    elif cfg.flow is FlowKind.SPARSE_METAORDER:
        for k in range(d):
            if rng.random() >= cfg.metaorder_prob:
                continue
            sign = rng.choice([-1.0, 1.0])
            Q = rng.lognormal(cfg.size_mu, cfg.size_sigma)
            start = int(rng.integers(M))
            span = int(rng.integers(1, M - start + 1))
            volumes[start:start + span, k] = sign * Q / span
    else:
        for k in range(d):
            flips = rng.random(M) < cfg.flip_prob
            flips[0] = False
            signs = rng.choice([-1.0, 1.0]) * np.where(np.cumsum(flips) % 2 == 0, 1.0, -1.0)
            volumes[:, k] = signs * rng.lognormal(cfg.size_mu, cfg.size_sigma, size=M)
    return volumes


def _ar1_multipliers(cfg: SimConfig, seed: int) -> np.ndarray:
    """episode 间成交量规模的 AR(1) 调制，ar1 = 0 时恒为 1"""
    if cfg.ar1 == 0.0:
        return np.ones(cfg.N)
    rng = np.random.default_rng([seed, cfg.N, 1])
    shocks = rng.standard_normal(cfg.N)
    state = np.empty(cfg.N)
    state[0] = shocks[0]
    scale = np.sqrt(1.0 - cfg.ar1 ** 2)
    for n in range(1, cfg.N):
        state[n] = cfg.ar1 * state[n - 1] + scale * shocks[n]
    return np.exp(0.5 * state)


@dataclass
class SimulationResult:
    """模拟输出：归一化视图、价格视图、真实核与噪声"""
    normalized: List[NormalizedEpisode]
    dataset: Dataset
    truth: KernelTensor
    noise: np.ndarray  # (N, M, d)
    config: SimConfig = field(repr=False, default=None)


def _price_view(ep_id: str, returns: np.ndarray, volumes: np.ndarray, cfg: SimConfig,
                assets: Sequence[str], timestamp: pd.Timestamp) -> Episode:
    """σ≡1 反归一化：P_{t_0} = P0，bin i 收盘 = P0 + y_i"""
    low_point = float(returns.min(initial=0.0))
    P0 = cfg.price_level if cfg.price_level + low_point > 0 else 1.0 - low_point
    last = P0 + returns
    first = np.vstack([np.full((1, returns.shape[1]), P0), last[:-1]])
    return Episode(
        episode_id=ep_id, assets=tuple(assets), first=first,
        high=np.maximum(first, last), low=np.minimum(first, last), last=last,
        signed_volume=volumes, bin_seconds=cfg.bin_seconds, timestamp=timestamp,
    )


def simulate_dataset(
    cfg: SimConfig, seed: Optional[int] = None, scheduler: Optional[TaskScheduler] = None
) -> SimulationResult:
    """y = U·vec(G*) + ε，ε ~ N(0, R²) 独立同分布"""
    seed = cfg.seed if seed is None else seed
    truth = truth_tensor(cfg)
    assets = cfg.asset_ids()
    multipliers = _ar1_multipliers(cfg, seed)

    def one(n: int):
        rng = np.random.default_rng([seed, n])
        volumes = _flow(cfg, rng) * multipliers[n]
        clean = DesignOperator(volumes, cfg.c_S, cfg.c_X).apply(truth)
        noise = cfg.noise_R * rng.standard_normal((cfg.M, cfg.d))
        return volumes, clean + noise, noise

    outputs = resolve_scheduler(scheduler).map(one, range(cfg.N))
    normalized, episodes, noises = [], [], []
    for n, (volumes, returns, noise) in enumerate(outputs):
        ep_id = f"sim-{n:05d}"
        stamp = BASE_DAY + pd.Timedelta(days=n)
        normalized.append(NormalizedEpisode(ep_id, returns, volumes, tuple(assets), cfg.bin_seconds, stamp))
        episodes.append(_price_view(ep_id, returns, volumes, cfg, assets, stamp))
        noises.append(noise)
    dataset = Dataset(episodes=tuple(episodes), assets=tuple(assets), M=cfg.M, bin_seconds=cfg.bin_seconds)
    logger.info(f"simulated {cfg.N} episodes (M={cfg.M}, d={cfg.d}, flow={cfg.flow.value}, R={cfg.noise_R})")
    return SimulationResult(normalized, dataset, truth, np.array(noises), cfg)


@dataclass
class TickSimConfig:
    """逐笔成交模拟配置：马尔可夫符号链 + 同号连续段的平方根冲击"""
    n_days: int = 20
    trades_per_day: int = 2000
    flip_prob: float = 0.1
    Y: float = 1.0
    delta: float = 0.5
    sigma_D: float = 1.0
    noise: float = 0.0
    decay: Dict[str, Any] = field(default_factory=lambda: {"family": "power", "beta": 0.0, "tau": 1.0})
    assets: List[str] = field(default_factory=lambda: ["A0"])
    price_level: float = 100.0
    session_open_seconds: int = 34_200
    session_seconds: int = 23_400
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.flip_prob < 1.0):
            raise ValueError("flip_prob must lie in (0, 1)")
        if self.n_days <= 0 or self.trades_per_day <= 1:
            raise ValueError("n_days must be positive and trades_per_day > 1")
        if self.sigma_D <= 0 or self.noise < 0:
            raise ValueError("sigma_D must be positive and noise nonnegative")

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "TickSimConfig":
        data = dict(raw or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown tick simulation settings: {sorted(unknown)}")
        return cls(**data)

    def decay_kernel(self) -> ParametricKernel:
        return ParametricKernel.from_dict(self.decay)


def _sign_chain(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    flips = rng.random(n) < p
    flips[0] = False
    return rng.choice([-1.0, 1.0]) * np.where(np.cumsum(flips) % 2 == 0, 1.0, -1.0)


def _day_path(cfg: TickSimConfig, signs: np.ndarray, times: np.ndarray,
              rng: np.random.Generator) -> np.ndarray:
    """单日成交后价格偏离（以 σ 为单位）"""
    n = len(signs)
    kernel = cfg.decay_kernel()
    G0 = kernel(0.0)
    path = np.zeros(n)
    change = np.flatnonzero(np.diff(signs) != 0) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [n]]) - 1
    for start, end in zip(starts, ends):
        sign = signs[start]
        executed = np.arange(1, end - start + 2)
        path[start:end + 1] += sign * cfg.Y * (executed / n) ** cfg.delta
        if end + 1 < n:
            peak = sign * cfg.Y * (executed[-1] / n) ** cfg.delta
            path[end + 1:] += peak * kernel(times[end + 1:] - times[end]) / G0
    if cfg.noise > 0:
        path += np.cumsum(cfg.noise / np.sqrt(n) * rng.standard_normal(n))
    return path


def simulate_ticks(cfg: TickSimConfig, seed: Optional[int] = None) -> pd.DataFrame:
    """生成逐笔成交 (timestamp_ns, asset_id, signed_volume, price)

    当日价格路径按当日实现波动率缩放为 σ_D。
    """
    seed = cfg.seed if seed is None else seed
    n = cfg.trades_per_day
    spacing = cfg.session_seconds / n
    offsets = cfg.session_open_seconds + (np.arange(n) + 0.5) * spacing
    base_day = BASE_DAY.value // NS_PER_DAY
    frames = []
    for a, asset in enumerate(cfg.assets):
        for day in range(cfg.n_days):
            rng = np.random.default_rng([seed, a, day])
            signs = _sign_chain(rng, n, cfg.flip_prob)
            path = _day_path(cfg, signs, offsets, rng)
            sigma = (path.max() - path.min()) / 3.0 + 2.0 * abs(path[-1] - path[0]) / 3.0
            scale = cfg.sigma_D / sigma if sigma > 0 else cfg.sigma_D
            stamps = (base_day + day) * NS_PER_DAY + np.rint(offsets * NS_PER_SECOND).astype(np.int64)
            frames.append(pd.DataFrame({
                "timestamp_ns": stamps,
                "asset_id": asset,
                "signed_volume": signs,
                "price": cfg.price_level + scale * path,
            }))
    ticks = pd.concat(frames, ignore_index=True)
    ticks = ticks.sort_values("timestamp_ns", kind="mergesort").reset_index(drop=True)
    logger.info(f"simulated {len(ticks)} ticks over {cfg.n_days} days for {len(cfg.assets)} assets")
    return ticks
