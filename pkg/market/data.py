"""
分箱行情数据：类型定义与 CSV 读写
"""
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import DataError

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = [
    "episode_id", "bin_index", "asset_id", "first", "high", "low", "last", "signed_volume",
]
OPTIONAL_EPISODE_COLUMNS = ["volume", "timestamp", "daily_volume"]
NORMALIZED_COLUMNS = ["episode_id", "bin_index", "asset_id", "return", "volume"]
TICK_COLUMNS = ["timestamp_ns", "asset_id", "signed_volume", "price"]
PRICE_FIELDS = ("first", "high", "low", "last")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class BinBar:
    """单个资产单个分箱的 K 线"""
    first: float
    high: float
    low: float
    last: float
    signed_volume: float
    volume: Optional[float] = None

    @property
    def unsigned_volume(self) -> float:
        return abs(self.signed_volume) if self.volume is None else self.volume


@dataclass(frozen=True)
class Episode:
    """一个交易时段：M×d 的分箱网格"""
    episode_id: str
    assets: Tuple[str, ...]
    first: np.ndarray
    high: np.ndarray
    low: np.ndarray
    last: np.ndarray
    signed_volume: np.ndarray
    bin_seconds: int = 300
    timestamp: Optional[pd.Timestamp] = None
    volume: Optional[np.ndarray] = None
    daily_volume: Optional[np.ndarray] = None  # 窗口截取前的全日 V_D

    def __post_init__(self):
        shape = np.shape(self.first)
        if len(shape) != 2 or shape[1] != len(self.assets):
            raise DataError(f"episode {self.episode_id}: bar grid shape {shape} does not match assets")
        for name in PRICE_FIELDS + ("signed_volume",):
            if np.shape(getattr(self, name)) != shape:
                raise DataError(f"episode {self.episode_id}: field {name} has inconsistent shape")
        if self.volume is not None and np.shape(self.volume) != shape:
            raise DataError(f"episode {self.episode_id}: field volume has inconsistent shape")
        if self.daily_volume is not None and np.shape(self.daily_volume) != (shape[1],):
            raise DataError(f"episode {self.episode_id}: daily_volume must have one entry per asset")
        if self.bin_seconds <= 0:
            raise DataError("bin_seconds must be positive")

    @property
    def M(self) -> int:
        return self.first.shape[0]

    @property
    def d(self) -> int:
        return self.first.shape[1]

    @property
    def unsigned_volume(self) -> np.ndarray:
        """V_{t_i}：没有单独的成交量列时取 |signed_volume|"""
        return np.abs(self.signed_volume) if self.volume is None else self.volume

    def bar(self, i: int, asset: int) -> BinBar:
        return BinBar(
            first=float(self.first[i, asset]),
            high=float(self.high[i, asset]),
            low=float(self.low[i, asset]),
            last=float(self.last[i, asset]),
            signed_volume=float(self.signed_volume[i, asset]),
            volume=None if self.volume is None else float(self.volume[i, asset]),
        )

    def bars(self, asset: int, start: int = 0, stop: Optional[int] = None) -> List[BinBar]:
        stop = self.M if stop is None else stop
        return [self.bar(i, asset) for i in range(start, stop)]

    def select(self, columns: Sequence[int]) -> "Episode":
        cols = list(columns)
        return replace(
            self,
            assets=tuple(self.assets[c] for c in cols),
            first=self.first[:, cols],
            high=self.high[:, cols],
            low=self.low[:, cols],
            last=self.last[:, cols],
            signed_volume=self.signed_volume[:, cols],
            volume=None if self.volume is None else self.volume[:, cols],
            daily_volume=None if self.daily_volume is None else self.daily_volume[cols],
        )


@dataclass(frozen=True)
class Dataset:
    """按时间排序的 episode 序列，d 和 M 一致"""
    episodes: Tuple[Episode, ...]
    assets: Tuple[str, ...]
    M: int
    bin_seconds: int = 300

    def __post_init__(self):
        for ep in self.episodes:
            if ep.M != self.M:
                raise DataError(f"inconsistent M: episode {ep.episode_id} has {ep.M} bins, expected {self.M}")
            if ep.assets != self.assets:
                raise DataError(f"episode {ep.episode_id} has assets {ep.assets}, expected {self.assets}")
        stamps = [ep.timestamp for ep in self.episodes]
        if all(s is not None for s in stamps) and any(b < a for a, b in zip(stamps, stamps[1:])):
            raise DataError("episodes must be sorted by timestamp")

    @property
    def d(self) -> int:
        return len(self.assets)

    @property
    def N(self) -> int:
        return len(self.episodes)

    def __len__(self) -> int:
        return len(self.episodes)

    def __iter__(self) -> Iterator[Episode]:
        return iter(self.episodes)

    def __getitem__(self, index: int) -> Episode:
        return self.episodes[index]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return replace(self, episodes=tuple(self.episodes[i] for i in indices))

    def slice(self, start: int, stop: int) -> "Dataset":
        return replace(self, episodes=self.episodes[start:stop])


@dataclass(frozen=True)
class NormalizedEpisode:
    """回归形式的 episode：无量纲收益与交易量"""
    episode_id: str
    returns: np.ndarray  # (M, d)
    volumes: np.ndarray  # (M, d)
    assets: Tuple[str, ...] = ()
    bin_seconds: int = 300
    timestamp: Optional[pd.Timestamp] = None

    def __post_init__(self):
        if self.returns.shape != self.volumes.shape or self.returns.ndim != 2:
            raise DataError(f"episode {self.episode_id}: returns and volumes must share shape (M, d)")
        if not (np.all(np.isfinite(self.returns)) and np.all(np.isfinite(self.volumes))):
            raise DataError(f"episode {self.episode_id}: normalized entries must be finite")
        if not self.assets:
            object.__setattr__(self, "assets", tuple(str(i) for i in range(self.returns.shape[1])))

    @property
    def M(self) -> int:
        return self.returns.shape[0]

    @property
    def d(self) -> int:
        return self.returns.shape[1]

    def select(self, columns: Sequence[int]) -> "NormalizedEpisode":
        cols = list(columns)
        return replace(
            self,
            returns=self.returns[:, cols],
            volumes=self.volumes[:, cols],
            assets=tuple(self.assets[c] for c in cols),
        )


# ---- 读取 ----

def _read_frame(path: PathLike, schema: Optional[Dict[str, str]], required: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if schema:
        frame = frame.rename(columns={src: dst for dst, src in schema.items()})
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataError(f"missing required column: {', '.join(missing)}")
    return frame


def _to_float(series: pd.Series, name: str) -> np.ndarray:
    try:
        return series.map(float).to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"column {name}: {e}") from None


def load_episodes(
    path: PathLike,
    schema: Optional[Dict[str, str]] = None,
    bin_seconds: int = 300,
    M: Optional[int] = None,
) -> Dataset:
    """读取规范 CSV；缺失分箱成交量为 0，价格沿用前一分箱"""
    frame = _read_frame(path, schema, EPISODE_COLUMNS)
    records = pd.DataFrame({
        "episode_id": frame["episode_id"].astype(str),
        "asset_id": frame["asset_id"].astype(str),
        "bin_index": frame["bin_index"].map(int),
    })
    for name in PRICE_FIELDS + ("signed_volume",):
        records[name] = _to_float(frame[name], name)
    has_volume = "volume" in frame.columns
    if has_volume:
        records["volume"] = _to_float(frame["volume"], "volume")
    if "daily_volume" in frame.columns:
        records["daily_volume"] = _to_float(frame["daily_volume"], "daily_volume")
    if "timestamp" in frame.columns:
        records["timestamp"] = pd.to_datetime(frame["timestamp"])
    dataset = frame_to_dataset(records, bin_seconds=bin_seconds, M=M)
    logger.info(f"loaded {dataset.N} episodes (M={dataset.M}, d={dataset.d}) from {path}")
    return dataset


def frame_to_dataset(
    records: pd.DataFrame,
    bin_seconds: int = 300,
    M: Optional[int] = None,
    assets: Optional[Sequence[str]] = None,
) -> Dataset:
    """长表转 Dataset

    列：episode_id, bin_index, asset_id, first, high, low, last, signed_volume，
    可选 volume, timestamp, daily_volume
    """
    if records.empty:
        raise DataError("no episode rows")
    if records.duplicated(["episode_id", "bin_index", "asset_id"]).any():
        raise DataError("duplicate (episode_id, bin_index, asset_id) rows")
    prices = records[list(PRICE_FIELDS)].to_numpy(dtype=float)
    if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
        raise DataError("non-positive price")
    if (records["bin_index"] < 0).any():
        raise DataError("negative bin_index")

    asset_list = list(assets) if assets is not None else list(dict.fromkeys(records["asset_id"]))
    asset_pos = {a: i for i, a in enumerate(asset_list)}
    unknown = set(records["asset_id"]) - set(asset_pos)
    if unknown:
        raise DataError(f"unknown assets: {sorted(unknown)}")
    has_volume = "volume" in records.columns
    has_stamp = "timestamp" in records.columns
    has_daily = "daily_volume" in records.columns

    expected_M = M
    episodes: List[Episode] = []
    for episode_id, group in records.groupby("episode_id", sort=False):
        ep_M = int(group["bin_index"].max()) + 1
        if M is not None:
            if ep_M > M:
                raise DataError(f"episode {episode_id}: bin_index {ep_M - 1} outside M={M}")
            ep_M = M
        elif expected_M is None:
            expected_M = ep_M
        elif ep_M != expected_M:
            raise DataError(f"inconsistent M: episode {episode_id} has {ep_M} bins, expected {expected_M}")
        episodes.append(_build_episode(str(episode_id), group, ep_M, asset_list, asset_pos,
                                       bin_seconds, has_volume, has_stamp, has_daily))

    if all(ep.timestamp is not None for ep in episodes):
        episodes.sort(key=lambda ep: ep.timestamp)
    return Dataset(episodes=tuple(episodes), assets=tuple(asset_list), M=int(expected_M),
                   bin_seconds=bin_seconds)


def _build_episode(
    episode_id: str,
    group: pd.DataFrame,
    M: int,
    assets: List[str],
    asset_pos: Dict[str, int],
    bin_seconds: int,
    has_volume: bool,
    has_stamp: bool,
    has_daily: bool = False,
) -> Episode:
    d = len(assets)
    rows = group["bin_index"].to_numpy(int)
    cols = group["asset_id"].map(asset_pos).to_numpy(int)
    grids = {}
    for name in PRICE_FIELDS:
        grid = np.full((M, d), np.nan)
        grid[rows, cols] = group[name].to_numpy(float)
        grids[name] = grid
    signed = np.zeros((M, d))
    signed[rows, cols] = group["signed_volume"].to_numpy(float)
    volume = None
    if has_volume:
        volume = np.zeros((M, d))
        volume[rows, cols] = group["volume"].to_numpy(float)

    present = ~np.isnan(grids["last"])
    for k in range(d):
        filled = np.flatnonzero(present[:, k])
        if filled.size == 0:
            raise DataError(f"episode {episode_id}: asset {assets[k]} has no bars")
        carry = grids["first"][filled[0], k]
        for i in range(M):
            if present[i, k]:
                carry = grids["last"][i, k]
            else:
                for name in PRICE_FIELDS:
                    grids[name][i, k] = carry

    first, high, low, last = (grids[n] for n in PRICE_FIELDS)
    lo = np.minimum(first, last)
    hi = np.maximum(first, last)
    if np.any(low > lo) or np.any(high < hi):
        raise DataError(
            f"episode {episode_id}: bar violates low <= min(first,last) <= max(first,last) <= high"
        )

    timestamp = None
    if has_stamp:
        timestamp = pd.Timestamp(group["timestamp"].iloc[0])
    daily = None
    if has_daily:
        daily = np.zeros(d)
        daily[cols] = group["daily_volume"].to_numpy(float)
    return Episode(
        episode_id=episode_id, assets=tuple(assets), first=first, high=high, low=low, last=last,
        signed_volume=signed, bin_seconds=bin_seconds, timestamp=timestamp, volume=volume,
        daily_volume=daily,
    )


def dataset_to_frame(dataset: Dataset) -> pd.DataFrame:
    frames = []
    has_volume = all(ep.volume is not None for ep in dataset)
    has_stamp = all(ep.timestamp is not None for ep in dataset)
    has_daily = all(ep.daily_volume is not None for ep in dataset)
    for ep in dataset:
        bins, cols = np.meshgrid(np.arange(ep.M), np.arange(ep.d), indexing="ij")
        part = {
            "episode_id": ep.episode_id,
            "bin_index": bins.ravel(),
            "asset_id": [ep.assets[c] for c in cols.ravel()],
        }
        for name in PRICE_FIELDS + ("signed_volume",):
            part[name] = getattr(ep, name).ravel()
        if has_volume:
            part["volume"] = ep.volume.ravel()
        if has_stamp:
            part["timestamp"] = ep.timestamp.isoformat()
        if has_daily:
            part["daily_volume"] = ep.daily_volume[cols.ravel()]
        frames.append(pd.DataFrame(part))
    columns = EPISODE_COLUMNS + (["volume"] if has_volume else []) + (["timestamp"] if has_stamp else [])
    columns += ["daily_volume"] if has_daily else []
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]


def write_episodes(dataset: Dataset, path: PathLike) -> None:
    """写出规范 CSV（load_episodes 的逆操作）"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    dataset_to_frame(dataset).to_csv(path, index=False, lineterminator="\n")


def write_normalized(episodes: Sequence[NormalizedEpisode], path: PathLike) -> None:
    frames = []
    for ep in episodes:
        bins, cols = np.meshgrid(np.arange(ep.M), np.arange(ep.d), indexing="ij")
        frames.append(pd.DataFrame({
            "episode_id": ep.episode_id,
            "bin_index": bins.ravel(),
            "asset_id": [ep.assets[c] for c in cols.ravel()],
            "return": ep.returns.ravel(),
            "volume": ep.volumes.ravel(),
        }))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=NORMALIZED_COLUMNS)
    frame[NORMALIZED_COLUMNS].to_csv(path, index=False, lineterminator="\n")


def load_normalized(path: PathLike, bin_seconds: int = 300) -> List[NormalizedEpisode]:
    """读取已归一化的 episode CSV，缺失分箱视为 0"""
    frame = _read_frame(path, None, NORMALIZED_COLUMNS)
    frame["bin_index"] = frame["bin_index"].map(int)
    frame["return"] = _to_float(frame["return"], "return")
    frame["volume"] = _to_float(frame["volume"], "volume")
    assets = list(dict.fromkeys(frame["asset_id"]))
    pos = {a: i for i, a in enumerate(assets)}
    M = int(frame["bin_index"].max()) + 1
    episodes = []
    for episode_id, group in frame.groupby("episode_id", sort=False):
        rows = group["bin_index"].to_numpy(int)
        cols = group["asset_id"].map(pos).to_numpy(int)
        returns = np.zeros((M, len(assets)))
        volumes = np.zeros((M, len(assets)))
        returns[rows, cols] = group["return"].to_numpy(float)
        volumes[rows, cols] = group["volume"].to_numpy(float)
        episodes.append(NormalizedEpisode(str(episode_id), returns, volumes, tuple(assets), bin_seconds))
    logger.info(f"loaded {len(episodes)} normalized episodes (M={M}, d={len(assets)}) from {path}")
    return episodes


def load_ticks(path: PathLike, schema: Optional[Dict[str, str]] = None) -> pd.DataFrame:
    """读取逐笔成交，按时间稳定排序"""
    frame = _read_frame(path, schema, TICK_COLUMNS)
    ticks = pd.DataFrame({
        "timestamp_ns": frame["timestamp_ns"].map(int).astype(np.int64),
        "asset_id": frame["asset_id"].astype(str),
        "signed_volume": _to_float(frame["signed_volume"], "signed_volume"),
        "price": _to_float(frame["price"], "price"),
    })
    if np.any(ticks["price"] <= 0):
        raise DataError("non-positive price")
    return ticks.sort_values("timestamp_ns", kind="mergesort").reset_index(drop=True)


def write_ticks(ticks: pd.DataFrame, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    ticks[TICK_COLUMNS].to_csv(path, index=False, lineterminator="\n")
