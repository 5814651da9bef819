"""
合成母单：随机交易员编号 + 同号连续段分组，再转成 TWAP episode
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.errors import DataError
from core.types import ImpactWindow
from market.data import Dataset, Episode
from market.transforms import NS_PER_DAY, bars_from_ticks, tick_calendar

logger = logging.getLogger(__name__)

LABEL_COLUMN = "trader_id"
METAORDER_COLUMN = "metaorder_id"
METAORDER_CSV_COLUMNS = [
    "metaorder_id", "asset_id", "sign", "first_ts", "last_ts", "n_children", "total_volume",
]

TraderCount = Union[int, Mapping[str, int]]


@dataclass
class ProxyConfig:
    """母单代理配置；N_T 为 None 时按资产自动校准"""
    N_T: Optional[TraderCount] = None
    seed: int = 0
    min_children: int = 4
    target_length: float = 10.0
    window: ImpactWindow = ImpactWindow.BIN
    min_points: int = 50
    bin_seconds: int = 300
    session_open_seconds: int = 34_200
    session_seconds: int = 23_400

    def __post_init__(self):
        self.window = ImpactWindow(self.window)
        if self.min_children < 1:
            raise ValueError("min_children must be >= 1")
        counts = self.N_T.values() if isinstance(self.N_T, Mapping) else [self.N_T]
        if any(n is not None and int(n) < 1 for n in counts):
            raise ValueError("N_T must be >= 1")

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "ProxyConfig":
        data = dict(raw or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown proxy settings: {sorted(unknown)}")
        return cls(**data)

    @property
    def M(self) -> int:
        return self.session_seconds // self.bin_seconds


@dataclass
class Metaorder:
    """同一资产、同一编号、同一交易日内的最大同号连续成交"""
    metaorder_id: int
    asset: str
    sign: int
    timestamps: np.ndarray  # int64 ns
    volumes: np.ndarray
    prices: np.ndarray
    bins: np.ndarray
    day: int
    label: int = 0
    pre_price: float = float("nan")

    @property
    def n_children(self) -> int:
        return len(self.volumes)

    @property
    def total_volume(self) -> float:
        return float(np.abs(self.volumes).sum())

    @property
    def start(self) -> int:
        return int(self.timestamps[0])

    @property
    def end(self) -> int:
        return int(self.timestamps[-1])

    @property
    def first_bin(self) -> int:
        return int(self.bins[0])

    @property
    def last_bin(self) -> int:
        return int(self.bins[-1])


def assign_ids(ticks: pd.DataFrame, N_T: TraderCount, seed: int = 0) -> pd.DataFrame:
    """给每笔成交一个 {0,…,N_T−1} 上均匀分布的随机编号"""
    rng = np.random.default_rng(seed)
    if isinstance(N_T, Mapping):
        missing = set(ticks["asset_id"]) - set(N_T)
        if missing:
            raise DataError(f"no trader count for assets {sorted(missing)}")
        counts = ticks["asset_id"].map(lambda a: int(N_T[a])).to_numpy(np.int64)
    else:
        counts = np.full(len(ticks), int(N_T), dtype=np.int64)
    labels = np.floor(rng.random(len(ticks)) * counts).astype(np.int64)
    return ticks.assign(**{LABEL_COLUMN: np.minimum(labels, counts - 1)})


def calibrate_n_traders(ticks: pd.DataFrame, target_length: float = 10.0) -> Dict[str, int]:
    """按符号翻转频率估计 N_T，使平均母单长度约为 target_length"""
    if target_length <= 2:
        raise ValueError("target_length must exceed 2")
    e = 1.0 - 2.0 / target_length
    out: Dict[str, int] = {}
    for asset, group in ticks.groupby("asset_id", sort=False):
        signs = np.sign(group["signed_volume"].to_numpy(float))
        signs = signs[signs != 0]
        if len(signs) < 2:
            out[asset] = 1
            continue
        r = 1.0 - 2.0 * float(np.mean(signs[1:] != signs[:-1]))
        if r <= 0 or r >= 1:
            out[asset] = 1 if r <= 0 else len(signs)
            continue
        n = r * (1.0 - e) / (e * (1.0 - r))
        out[asset] = max(1, int(round(n)))
        logger.debug(f"asset {asset}: sign autocorrelation {r:.3f} -> N_T={out[asset]}")
    return out


def _runs(labeled: pd.DataFrame, min_children: int) -> pd.DataFrame:
    """为每笔成交标上所属连续段与母单编号（丢弃的段为 0）"""
    frame = labeled.assign(
        _order=np.arange(len(labeled)),
        _sign=np.sign(labeled["signed_volume"].to_numpy(float)).astype(np.int64),
    )
    active = frame[frame["_sign"] != 0]
    keyed = active.sort_values(["asset_id", LABEL_COLUMN, "day", "_order"], kind="mergesort")
    keys = keyed[["asset_id", LABEL_COLUMN, "day", "_sign"]]
    breaks = (keys != keys.shift()).any(axis=1).to_numpy()
    keyed = keyed.assign(_run=np.cumsum(breaks))
    sizes = keyed.groupby("_run")["_run"].transform("size")
    kept = keyed[sizes >= min_children]
    starts = kept.groupby("_run")["_order"].min().sort_values()
    ids = pd.Series(np.arange(1, len(starts) + 1), index=starts.index)
    assignment = np.zeros(len(frame), dtype=np.int64)
    assignment[kept["_order"].to_numpy()] = kept["_run"].map(ids).to_numpy()
    return frame.assign(**{METAORDER_COLUMN: assignment})


def label_metaorders(
    labeled: pd.DataFrame,
    min_children: int = 4,
    bin_seconds: int = 300,
    session_open_seconds: int = 34_200,
    session_seconds: int = 23_400,
) -> pd.DataFrame:
    """返回带 day、bin、prev_price 与 metaorder_id 列的成交表"""
    if LABEL_COLUMN not in labeled:
        raise DataError(f"ticks have no {LABEL_COLUMN} column; call assign_ids first")
    frame = tick_calendar(labeled, bin_seconds, session_open_seconds, session_seconds)
    frame = frame.reset_index(drop=True)
    frame = frame.assign(prev_price=frame.groupby(["asset_id", "day"], sort=False)["price"].shift(1))
    return _runs(frame, min_children).drop(columns=["_order", "_sign"])


def metaorders_from_frame(frame: pd.DataFrame) -> List[Metaorder]:
    """由 label_metaorders 的输出组装母单"""
    kept = frame[frame[METAORDER_COLUMN] > 0]
    metaorders = []
    for mid, rows in kept.groupby(METAORDER_COLUMN, sort=True):
        volumes = rows["signed_volume"].to_numpy(float)
        metaorders.append(Metaorder(
            metaorder_id=int(mid),
            asset=str(rows["asset_id"].iloc[0]),
            sign=int(np.sign(volumes[0])),
            timestamps=rows["timestamp_ns"].to_numpy(np.int64),
            volumes=volumes,
            prices=rows["price"].to_numpy(float),
            bins=rows["bin"].to_numpy(np.int64),
            day=int(rows["day"].iloc[0]),
            label=int(rows[LABEL_COLUMN].iloc[0]),
            pre_price=float(rows["prev_price"].iloc[0]),
        ))
    discarded = float(frame.loc[frame[METAORDER_COLUMN] == 0, "signed_volume"].abs().sum())
    logger.info(f"grouped {len(metaorders)} metaorders, discarded volume {discarded:g}")
    return metaorders


def group_metaorders(
    labeled: pd.DataFrame,
    min_children: int = 4,
    bin_seconds: int = 300,
    session_open_seconds: int = 34_200,
    session_seconds: int = 23_400,
) -> List[Metaorder]:
    """每个编号内按时间切成最大同号连续段，短于 min_children 的段丢弃"""
    frame = label_metaorders(labeled, min_children, bin_seconds, session_open_seconds, session_seconds)
    return metaorders_from_frame(frame)


def write_metaorders(metaorders: Sequence[Metaorder], path: Union[str, Path]) -> None:
    rows = [
        [m.metaorder_id, m.asset, m.sign, m.start, m.end, m.n_children, m.total_volume]
        for m in metaorders
    ]
    pd.DataFrame(rows, columns=METAORDER_CSV_COLUMNS).to_csv(path, index=False, lineterminator="\n")


def day_episodes(bars: Dataset) -> Dict[int, Episode]:
    """交易日编号 → 当日分箱 episode"""
    out = {}
    for ep in bars:
        stamp = ep.timestamp if ep.timestamp is not None else pd.Timestamp(ep.episode_id)
        out[int(stamp.value // NS_PER_DAY)] = ep
    return out


def _window(arr: np.ndarray, start: int, M: int, pad: np.ndarray) -> np.ndarray:
    """取 [start, start+M) 行，越过日末的部分用 pad 补齐"""
    out = arr[start:start + M]
    if len(out) < M:
        out = np.vstack([out, np.repeat(pad[None, :], M - len(out), axis=0)])
    return out


def metaorders_to_episodes(
    metaorders: Sequence[Metaorder],
    bars: Dataset,
    M: Optional[int] = None,
) -> Dataset:
    """每个母单一个 episode，时钟从母单首个分箱开始，成交量在执行分箱内均匀分布

    daily_volume 记录当日全日成交量，归一化时 V_D 不随母单起点变化。
    """
    M = M or bars.M
    days = day_episodes(bars)
    episodes = []
    truncated = 0
    for m in metaorders:
        ep = days.get(m.day)
        if ep is None:
            raise DataError(f"metaorder {m.metaorder_id} falls on a day not covered by the bars")
        if m.asset not in bars.assets:
            raise DataError(f"metaorder {m.metaorder_id} trades unknown asset {m.asset}")
        a = bars.assets.index(m.asset)
        b0 = m.first_bin
        span = m.last_bin - b0 + 1
        if span > M:
            truncated += 1
            span = M
        close = ep.last[-1]
        flat = np.zeros(ep.d)
        volumes = np.zeros((M, ep.d))
        volumes[:span, a] = m.sign * m.total_volume / span
        stamp = ep.timestamp if ep.timestamp is not None else pd.Timestamp(ep.episode_id)
        episodes.append(Episode(
            episode_id=f"{ep.episode_id}-{m.asset}-{m.metaorder_id}",
            assets=bars.assets,
            first=_window(ep.first, b0, M, close),
            high=_window(ep.high, b0, M, close),
            low=_window(ep.low, b0, M, close),
            last=_window(ep.last, b0, M, close),
            signed_volume=volumes,
            bin_seconds=bars.bin_seconds,
            timestamp=stamp + pd.Timedelta(seconds=b0 * bars.bin_seconds),
            volume=_window(ep.unsigned_volume, b0, M, flat),
            daily_volume=ep.unsigned_volume.sum(axis=0),
        ))
    if truncated:
        logger.warning(f"{truncated} metaorders span more than {M} bins; volume spread over the first {M}")
    episodes.sort(key=lambda e: (e.timestamp, e.episode_id))
    return Dataset(episodes=tuple(episodes), assets=bars.assets, M=M, bin_seconds=bars.bin_seconds)


def min_size_scatter(metaorders: Sequence[Metaorder], ticks: pd.DataFrame, bars: Dataset) -> pd.DataFrame:
    """每个资产：平均单笔成交量与最小母单 Q/V_D"""
    days = day_episodes(bars)
    smallest: Dict[str, float] = {}
    for m in metaorders:
        ep = days.get(m.day)
        if ep is None or m.asset not in ep.assets:
            continue
        V_D = float(ep.unsigned_volume[:, ep.assets.index(m.asset)].sum())
        if V_D > 0:
            smallest[m.asset] = min(smallest.get(m.asset, np.inf), m.total_volume / V_D)
    avg = ticks.assign(size=ticks["signed_volume"].abs()).groupby("asset_id", sort=False)["size"].mean()
    rows = [
        {"asset_id": asset, "avg_trade_size": float(avg[asset]), "min_q_over_vd": q}
        for asset, q in smallest.items() if asset in avg.index
    ]
    return pd.DataFrame(rows, columns=["asset_id", "avg_trade_size", "min_q_over_vd"])


@dataclass
class ProxyRun:
    """代理流水线的全部产物"""
    labeled: pd.DataFrame
    metaorders: List[Metaorder]
    bars: Dataset
    episodes: Dataset
    n_traders: Dict[str, int] = field(default_factory=dict)


def build_proxy(
    ticks: pd.DataFrame,
    cfg: Optional[ProxyConfig] = None,
    labels: Optional[Sequence[int]] = None,
) -> ProxyRun:
    """编号 → 分组 → 日内分箱 → 母单 episode；labels 给定时直接使用外部编号"""
    cfg = cfg or ProxyConfig()
    n_traders: Dict[str, int] = {}
    if labels is not None:
        if len(labels) != len(ticks):
            raise DataError(f"got {len(labels)} trader ids for {len(ticks)} ticks")
        labeled = ticks.assign(**{LABEL_COLUMN: np.asarray(labels, dtype=np.int64)})
    else:
        if cfg.N_T is None:
            n_traders = calibrate_n_traders(ticks, cfg.target_length)
            logger.info(f"calibrated trader counts: {n_traders}")
        elif isinstance(cfg.N_T, Mapping):
            n_traders = {str(k): int(v) for k, v in cfg.N_T.items()}
        else:
            n_traders = {str(a): int(cfg.N_T) for a in dict.fromkeys(ticks["asset_id"])}
        labeled = assign_ids(ticks, n_traders, cfg.seed)
    frame = label_metaorders(
        labeled, cfg.min_children, cfg.bin_seconds, cfg.session_open_seconds, cfg.session_seconds
    )
    metaorders = metaorders_from_frame(frame)
    bars = bars_from_ticks(ticks, cfg.bin_seconds, cfg.session_open_seconds, cfg.session_seconds)
    episodes = metaorders_to_episodes(metaorders, bars, cfg.M)
    return ProxyRun(frame, metaorders, bars, episodes, n_traders)
