"""
数据集变换：逐笔转分箱、重新分箱、市场组合
"""
import logging
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import DataError

from .data import Dataset, Episode, frame_to_dataset

logger = logging.getLogger(__name__)

NS_PER_SECOND = 1_000_000_000
NS_PER_DAY = 86_400 * NS_PER_SECOND
MARKET_ASSET = "MKT"


def tick_calendar(
    ticks: pd.DataFrame,
    bin_seconds: int,
    session_open_seconds: int = 34_200,
    session_seconds: int = 23_400,
) -> pd.DataFrame:
    """给每笔成交加上 day 与 bin 列，丢弃交易时段外的成交"""
    ts = ticks["timestamp_ns"].to_numpy(np.int64)
    day = ts // NS_PER_DAY
    offset = (ts - day * NS_PER_DAY) / NS_PER_SECOND - session_open_seconds
    frame = ticks.assign(day=day, bin=np.floor(offset / bin_seconds).astype(np.int64))
    M = session_seconds // bin_seconds
    inside = (frame["bin"] >= 0) & (frame["bin"] < M)
    if not inside.all():
        logger.warning(f"dropping {(~inside).sum()} ticks outside the trading session")
    return frame[inside]


def bars_from_ticks(
    ticks: pd.DataFrame,
    bin_seconds: int = 300,
    session_open_seconds: int = 34_200,
    session_seconds: int = 23_400,
    assets: Optional[Sequence[str]] = None,
) -> Dataset:
    """每个交易日一个 episode；分箱 K 线取 first/high/low/last，成交量求和"""
    if session_seconds % bin_seconds:
        raise DataError("session length must be a multiple of bin_seconds")
    frame = tick_calendar(ticks, bin_seconds, session_open_seconds, session_seconds)
    if frame.empty:
        raise DataError("no ticks inside the trading session")
    frame = frame.assign(abs_volume=frame["signed_volume"].abs())
    grouped = frame.groupby(["day", "bin", "asset_id"], sort=True)
    bars = grouped.agg(
        first=("price", "first"),
        high=("price", "max"),
        low=("price", "min"),
        last=("price", "last"),
        signed_volume=("signed_volume", "sum"),
        volume=("abs_volume", "sum"),
    ).reset_index()
    day_start = pd.to_datetime(bars["day"] * NS_PER_DAY + session_open_seconds * NS_PER_SECOND)
    bars["episode_id"] = day_start.dt.strftime("%Y-%m-%d")
    bars["timestamp"] = day_start
    bars = bars.rename(columns={"bin": "bin_index"})
    if assets is None:
        assets = list(dict.fromkeys(ticks["asset_id"]))
    M = session_seconds // bin_seconds
    return frame_to_dataset(bars, bin_seconds=bin_seconds, M=M, assets=assets)


def select_assets(dataset: Dataset, assets: Sequence[str]) -> Dataset:
    """取资产子集"""
    missing = [a for a in assets if a not in dataset.assets]
    if missing:
        raise DataError(f"unknown assets: {missing}")
    cols = [dataset.assets.index(a) for a in assets]
    return replace(
        dataset,
        episodes=tuple(ep.select(cols) for ep in dataset),
        assets=tuple(assets),
    )


def rebin(dataset: Dataset, factor: int) -> Dataset:
    """把相邻 factor 个分箱合并为一个"""
    if factor < 1:
        raise ValueError("rebin factor must be >= 1")
    if factor == 1:
        return dataset
    M_new = dataset.M // factor
    if M_new == 0:
        raise DataError(f"cannot rebin M={dataset.M} by factor {factor}")
    if dataset.M % factor:
        logger.warning(f"dropping {dataset.M % factor} trailing bins when rebinning by {factor}")
    cut = M_new * factor

    def fold(arr: np.ndarray) -> np.ndarray:
        return arr[:cut].reshape(M_new, factor, arr.shape[1])

    episodes = []
    for ep in dataset:
        episodes.append(replace(
            ep,
            first=fold(ep.first)[:, 0, :],
            high=fold(ep.high).max(axis=1),
            low=fold(ep.low).min(axis=1),
            last=fold(ep.last)[:, -1, :],
            signed_volume=fold(ep.signed_volume).sum(axis=1),
            volume=None if ep.volume is None else fold(ep.volume).sum(axis=1),
            bin_seconds=ep.bin_seconds * factor,
        ))
    return replace(dataset, episodes=tuple(episodes), M=M_new, bin_seconds=dataset.bin_seconds * factor)


def market_weights(ep: Episode) -> np.ndarray:
    """M×d 的分箱成交金额权重；零成交分箱沿用上一分箱，第 0 箱前为等权"""
    notional = ep.unsigned_volume * ep.last
    total = notional.sum(axis=1, keepdims=True)
    raw = np.divide(notional, total, out=np.full_like(notional, np.nan), where=total > 0)
    return pd.DataFrame(raw).ffill().fillna(1.0 / ep.d).to_numpy()


def _market_column(ep: Episode) -> List[np.ndarray]:
    ref = ep.first[0]
    weights = market_weights(ep)
    fields = [
        100.0 * np.sum(getattr(ep, name) / ref * weights, axis=1) for name in ("first", "high", "low", "last")
    ]
    signed = (ep.signed_volume * ep.last / ref).sum(axis=1)
    unsigned = (ep.unsigned_volume * ep.last / ref).sum(axis=1)
    return fields + [signed, unsigned]


def market_portfolio(dataset: Dataset, name: str = MARKET_ASSET) -> Dataset:
    """追加按成交名义金额加权的市场组合资产

    价格为以 episode 首价为基准的相对价格(×100)，逐分箱按成交金额加权；
    成交量为各分箱按基准价折算的有符号名义成交额之和。
    """
    if name in dataset.assets:
        raise DataError(f"asset {name} already present")
    episodes = []
    for ep in dataset:
        first, high, low, last, signed, unsigned = _market_column(ep)

        def extend(arr: np.ndarray, col: np.ndarray) -> np.ndarray:
            return np.column_stack([arr, col])

        episodes.append(replace(
            ep,
            assets=ep.assets + (name,),
            first=extend(ep.first, first),
            high=extend(ep.high, high),
            low=extend(ep.low, low),
            last=extend(ep.last, last),
            signed_volume=extend(ep.signed_volume, signed),
            volume=extend(ep.unsigned_volume, unsigned),
            daily_volume=None if ep.daily_volume is None else np.append(ep.daily_volume, unsigned.sum()),
        ))
    return replace(dataset, episodes=tuple(episodes), assets=dataset.assets + (name,))


def pair_with_market(dataset: Dataset, asset: str, name: str = MARKET_ASSET) -> Dataset:
    """(资产, 市场组合) 二维数据集"""
    return select_assets(market_portfolio(dataset, name), [asset, name])
