"""
波动率与成交量曲线归一化
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import DataError

from .data import BinBar, Dataset, Episode, NormalizedEpisode

logger = logging.getLogger(__name__)


@dataclass
class NormalizationSettings:
    """归一化配置"""
    eps_sigma: float = 1e-12
    cap_factor: float = 100.0
    max_window: int = 20

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "NormalizationSettings":
        data = raw or {}
        return cls(
            eps_sigma=float(data.get("eps_sigma", 1e-12)),
            cap_factor=float(data.get("cap_factor", 100.0)),
            max_window=int(data.get("max_window", 20)),
        )


def interval_sigma(bars: Sequence[BinBar], eps_sigma: float = 1e-12) -> float:
    """σ = (1/3)(High−Low) + (2/3)|Last−First|，全平区间返回下限 ε_σ"""
    if len(bars) == 0:
        raise DataError("interval_sigma needs a nonempty slice of bars")
    high = max(b.high for b in bars)
    low = min(b.low for b in bars)
    sigma = (high - low) / 3.0 + 2.0 * abs(bars[-1].last - bars[0].first) / 3.0
    return sigma if sigma > 0 else eps_sigma


def cumulative_sigma(ep: Episode, eps_sigma: float = 1e-12) -> np.ndarray:
    """entry (i, ℓ) = interval_sigma(bars[0..i, ℓ])，向量化"""
    high = np.maximum.accumulate(ep.high, axis=0)
    low = np.minimum.accumulate(ep.low, axis=0)
    sigma = (high - low) / 3.0 + 2.0 * np.abs(ep.last - ep.first[0]) / 3.0
    return np.where(sigma > 0, sigma, eps_sigma)


def normalized_returns(episode: Episode, eps_sigma: float = 1e-12) -> np.ndarray:
    """(P_{t_{i+1}} − P_{t_0}) / σ_{[t_0, t_{i+1}]}"""
    return (episode.last - episode.first[0]) / cumulative_sigma(episode, eps_sigma)


def daily_volume(episode: Episode) -> np.ndarray:
    """V_D：每个资产的全日成交量；episode 自带 daily_volume 时优先使用"""
    if episode.daily_volume is not None:
        return np.asarray(episode.daily_volume, dtype=float)
    return episode.unsigned_volume.sum(axis=0)


def normalize_volumes(
    dataset: Dataset, settings: Optional[NormalizationSettings] = None
) -> Tuple[List[Optional[np.ndarray]], List[int]]:
    """Q̃ = (Q_{t_i}/V_D) · (1/w) Σ_r V_D^{(r)}/V_{t_i}^{(r)}，w = min(n, max_window)

    返回与 episode 对齐的列表（被剔除的 episode 为 None）以及被剔除的下标。
    只有全部资产都无成交的 episode 被剔除；单个资产无成交时该列 Q̃ = 0，
    且不进入该资产的滚动曲线。
    """
    settings = settings or NormalizationSettings()
    cap = dataset.M * settings.cap_factor
    out: List[Optional[np.ndarray]] = [None] * dataset.N
    excluded: List[int] = []
    history: List[np.ndarray] = []  # 保留 episode 的 V_D/V_{t_i} 比值

    for idx, ep in enumerate(dataset):
        V = ep.unsigned_volume
        V_D = daily_volume(ep)
        active = V_D > 0
        if not active.any():
            logger.warning(f"episode {ep.episode_id} has zero daily volume; excluded")
            excluded.append(idx)
            continue
        if not active.all():
            idle = [a for a, on in zip(ep.assets, active) if not on]
            logger.info(f"episode {ep.episode_id}: no trades for {idle}; their volumes set to 0")
        ratio = np.minimum(V_D[None, :] / np.where(V > 0, V, np.inf), cap)
        ratio = np.where(V > 0, ratio, cap)
        ratio[:, ~active] = np.nan
        history.append(ratio)
        window = history[-settings.max_window:]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            profile = np.nanmean(window, axis=0)
        vol = np.zeros_like(profile)
        vol[:, active] = ep.signed_volume[:, active] / V_D[active] * profile[:, active]
        out[idx] = vol
    return out, excluded


def normalize_dataset(
    dataset: Dataset, settings: Optional[NormalizationSettings] = None
) -> List[NormalizedEpisode]:
    """组合收益与成交量归一化，剔除 V_D = 0 的 episode"""
    settings = settings or NormalizationSettings()
    volumes, excluded = normalize_volumes(dataset, settings)
    result = []
    for ep, vol in zip(dataset, volumes):
        if vol is None:
            continue
        result.append(NormalizedEpisode(
            episode_id=ep.episode_id,
            returns=normalized_returns(ep, settings.eps_sigma),
            volumes=vol,
            assets=ep.assets,
            bin_seconds=ep.bin_seconds,
            timestamp=ep.timestamp,
        ))
    if excluded:
        logger.info(f"normalized {len(result)} episodes, excluded {len(excluded)}")
    return result
