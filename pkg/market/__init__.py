"""
行情数据：读取、归一化与数据集变换
"""
from .data import (
    BinBar, Episode, Dataset, NormalizedEpisode,
    load_episodes, write_episodes, frame_to_dataset, dataset_to_frame,
    load_normalized, write_normalized, load_ticks, write_ticks,
)
from .normalize import (
    NormalizationSettings, interval_sigma, cumulative_sigma, normalized_returns,
    normalize_volumes, normalize_dataset, daily_volume,
)
from .transforms import (
    MARKET_ASSET, bars_from_ticks, tick_calendar, select_assets, rebin,
    market_portfolio, market_weights, pair_with_market,
)

__all__ = [
    "BinBar", "Episode", "Dataset", "NormalizedEpisode",
    "load_episodes", "write_episodes", "frame_to_dataset", "dataset_to_frame",
    "load_normalized", "write_normalized", "load_ticks", "write_ticks",
    "NormalizationSettings", "interval_sigma", "cumulative_sigma", "normalized_returns",
    "normalize_volumes", "normalize_dataset", "daily_volume",
    "MARKET_ASSET", "bars_from_ticks", "tick_calendar", "select_assets", "rebin",
    "market_portfolio", "market_weights", "pair_with_market",
]
