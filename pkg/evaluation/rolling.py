"""
滚动训练/验证、凹性参数扫描与分箱稳健性实验
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import DataError
from core.kernels import KernelTensor, json_default
from core.scheduler import TaskScheduler, resolve_scheduler
from market.data import Dataset, NormalizedEpisode
from market.normalize import normalize_dataset
from market.transforms import rebin

from .metrics import EpisodeSource, as_normalized
from .models import FittedModel, ModelRegistry, ModelSpec, default_registry

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["model", "c_S", "c_X", "horizon", "window", "IS_R2", "OOS_R2", "params_json"]


@dataclass
class RollingScheme:
    """按交易日切分：每个窗口训练 train_days 天，随后 test_days 天做样本外"""
    train_days: int = 21
    test_days: int = 21
    full_sample: bool = False

    def __post_init__(self):
        if self.train_days < 1 or self.test_days < 1:
            raise ValueError("train_days and test_days must be >= 1")

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "RollingScheme":
        data = dict(raw or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scheme settings: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def full(cls) -> "RollingScheme":
        return cls(full_sample=True)


@dataclass
class Window:
    index: int
    train: List[NormalizedEpisode]
    test: List[NormalizedEpisode]


def _day_blocks(episodes: Sequence[NormalizedEpisode]) -> List[List[NormalizedEpisode]]:
    """按日历日分组；没有时间戳的 episode 各自算一天"""
    blocks: List[List[NormalizedEpisode]] = []
    last_key = None
    for idx, ep in enumerate(episodes):
        key = ep.timestamp.normalize() if ep.timestamp is not None else ("episode", idx)
        if not blocks or key != last_key:
            blocks.append([])
            last_key = key
        blocks[-1].append(ep)
    return blocks


def make_windows(episodes: Sequence[NormalizedEpisode], scheme: RollingScheme) -> List[Window]:
    if scheme.full_sample:
        if not episodes:
            raise DataError("no episodes to evaluate")
        return [Window(0, list(episodes), [])]
    days = _day_blocks(episodes)
    if len(days) < scheme.train_days:
        raise DataError(
            f"insufficient data: {len(days)} days available, one window needs {scheme.train_days}"
        )
    windows = []
    w = 0
    while w * scheme.test_days + scheme.train_days <= len(days):
        start = w * scheme.test_days
        split = start + scheme.train_days
        train = [ep for day in days[start:split] for ep in day]
        test_days = days[split:split + scheme.test_days]
        test = [ep for day in test_days for ep in day] if len(test_days) == scheme.test_days else []
        windows.append(Window(w, train, test))
        w += 1
    return windows


@dataclass
class EvalReport:
    """逐 (模型, 步长, 窗口) 的 IS/OOS R²"""
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def add(
        self, model: FittedModel, horizon: int, window: int, is_r2: float, oos_r2: Optional[float]
    ) -> None:
        self.rows.append({
            "model": model.spec.name,
            "c_S": model.spec.c_S,
            "c_X": model.spec.c_X,
            "horizon": horizon,
            "window": window,
            "IS_R2": is_r2,
            "OOS_R2": np.nan if oos_r2 is None else oos_r2,
            "params_json": json.dumps(model.params, default=json_default, sort_keys=True),
        })

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def summary(self) -> List[Dict[str, Any]]:
        """每个 (模型, c_S, c_X, 步长) 的窗口平均"""
        frame = self.to_frame()
        out = []
        keys = ["model", "c_S", "c_X", "horizon"]
        for (model, c_S, c_X, horizon), group in frame.groupby(keys, sort=False):
            oos = group["OOS_R2"].dropna()
            out.append({
                "model": model,
                "c_S": float(c_S),
                "c_X": float(c_X),
                "horizon": int(horizon),
                "IS_R2": float(group["IS_R2"].mean()),
                "OOS_R2": float(oos.mean()) if len(oos) else None,
                "IS_R2_std": float(group["IS_R2"].std(ddof=0)),
                "OOS_R2_std": float(oos.std(ddof=0)) if len(oos) else None,
                "n_is": int(len(group)),
                "n_oos": int(len(oos)),
            })
        return out

    def mean(self, model: str, horizon: int, column: str = "OOS_R2") -> float:
        frame = self.to_frame()
        values = frame[(frame["model"] == model) & (frame["horizon"] == horizon)][column].dropna()
        return float(values.mean()) if len(values) else float("nan")

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def to_json(self, path: Union[str, Path]) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"summary": self.summary()}, f, indent=2, default=json_default)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "EvalReport":
        frame = pd.read_csv(path)
        missing = [c for c in REPORT_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"report is missing columns {missing}")
        return cls(rows=frame[REPORT_COLUMNS].to_dict("records"))


def rolling_eval(
    data: EpisodeSource,
    models: Union[ModelSpec, Sequence[ModelSpec]],
    scheme: Optional[RollingScheme] = None,
    horizons: Sequence[int] = (1,),
    registry: Optional[ModelRegistry] = None,
    scheduler: Optional[TaskScheduler] = None,
) -> EvalReport:
    """每个窗口先在训练段拟合，再分别计算样本内与样本外 R²

    多个窗口时窗口间并行，窗口内的拟合串行；报告按窗口顺序合并。
    """
    specs = [models] if isinstance(models, ModelSpec) else list(models)
    scheme = scheme or RollingScheme()
    registry = registry or default_registry()
    episodes = as_normalized(data)
    windows = make_windows(episodes, scheme)
    M = episodes[0].M
    bad = [h for h in horizons if not (1 <= h <= M)]
    if bad:
        raise ValueError(f"horizons {bad} outside [1, {M}]")

    pool = resolve_scheduler(scheduler)
    inner = pool if len(windows) == 1 else TaskScheduler(1)

    def run_window(window: Window) -> List[Tuple[FittedModel, int, int, float, Optional[float]]]:
        rows = []
        for spec in specs:
            model = registry.fit(spec, window.train, inner)
            if not model.converged:
                logger.warning(f"window {window.index}: {spec.name} projection did not converge")
            for h in horizons:
                is_r2 = model.r2(window.train, h)
                oos_r2 = model.r2(window.test, h) if window.test else None
                rows.append((model, h, window.index, is_r2, oos_r2))
        logger.info(f"window {window.index}: {len(window.train)} train / {len(window.test)} test episodes")
        return rows

    report = EvalReport()
    for rows in pool.map(run_window, windows):
        for row in rows:
            report.add(*row)
    return report


@dataclass
class SweepResult:
    """R²(c) 曲线"""
    c_grid: List[float]
    r2: List[float]
    fix: str
    model: str
    horizon: int

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.r2))

    @property
    def c_hat(self) -> float:
        return self.c_grid[self.best_index]

    @property
    def normalized(self) -> List[float]:
        peak = self.r2[self.best_index]
        if peak == 0:
            return [float("nan")] * len(self.r2)
        return [v / peak for v in self.r2]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "model": self.model,
            "fix": self.fix,
            "horizon": self.horizon,
            "c": self.c_grid,
            "r2": self.r2,
            "r2_normalized": self.normalized,
        })

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


def concavity_sweep(
    data: EpisodeSource,
    model: ModelSpec,
    c_grid: Sequence[float],
    fix: str = "c_X",
    horizon: int = 1,
    scheme: Optional[RollingScheme] = None,
    registry: Optional[ModelRegistry] = None,
    scheduler: Optional[TaskScheduler] = None,
) -> SweepResult:
    """fix 指定保持不变的参数（"both" 表示 c_S = c_X 一起扫描）

    scheme 为 None 时用全样本 IS R²，否则用滚动 OOS R² 的平均。
    """
    if fix not in ("c_S", "c_X", "both"):
        raise ValueError(f"fix must be c_S, c_X or both, got {fix}")
    if any(not (0.0 < c <= 1.0) for c in c_grid):
        raise ValueError("c_grid must lie in (0, 1]")
    episodes = as_normalized(data)
    use_scheme = scheme or RollingScheme.full()
    column = "IS_R2" if use_scheme.full_sample else "OOS_R2"
    curve = []
    for c in c_grid:
        if fix == "c_S":
            spec = model.with_concavity(model.c_S, c)
        elif fix == "c_X":
            spec = model.with_concavity(c, model.c_X)
        else:
            spec = model.with_concavity(c, c)
        report = rolling_eval(episodes, spec, use_scheme, [horizon], registry, scheduler)
        curve.append(report.mean(spec.name, horizon, column))
        logger.debug(f"sweep {fix}: c={c:g} -> R2 {curve[-1]:.5f}")
    result = SweepResult([float(c) for c in c_grid], curve, fix, model.name, horizon)
    logger.info(f"concavity sweep for {model.name}: c_hat={result.c_hat:g}")
    return result


def binning_robustness(
    dataset: Dataset,
    factors: Sequence[int],
    models: Union[ModelSpec, Sequence[ModelSpec]],
    horizons: Sequence[int] = (1,),
    scheme: Optional[RollingScheme] = None,
    registry: Optional[ModelRegistry] = None,
    scheduler: Optional[TaskScheduler] = None,
) -> pd.DataFrame:
    """按不同分箱粗细重新分箱并评估，结果带 factor 与 bin_seconds 列"""
    frames = []
    for factor in factors:
        coarse = rebin(dataset, factor)
        usable = [h for h in horizons if h <= coarse.M]
        if len(usable) < len(horizons):
            logger.warning(f"factor {factor}: dropping horizons longer than {coarse.M} bins")
        if not usable:
            continue
        report = rolling_eval(normalize_dataset(coarse), models, scheme or RollingScheme.full(),
                              usable, registry, scheduler)
        frame = report.to_frame()
        frame.insert(0, "bin_seconds", coarse.bin_seconds)
        frame.insert(0, "factor", factor)
        frames.append(frame)
    if not frames:
        raise DataError("no binning factor produced a usable evaluation")
    return pd.concat(frames, ignore_index=True)


def kernel_shape_table(kernels: Mapping[str, KernelTensor]) -> pd.DataFrame:
    """绘图用长表：model, lag, lag_seconds, row_asset, col_asset, value"""
    frames = []
    for name, K in kernels.items():
        frame = K.to_frame()
        frame.insert(0, "model", name)
        step = K.bin_seconds if K.bin_seconds is not None else 1.0
        frame.insert(2, "lag_seconds", frame["lag"] * step)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)
