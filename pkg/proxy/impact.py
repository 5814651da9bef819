"""
峰值冲击幂律拟合：log(I/σ_D) 对 log(Q/V_D) 的最小二乘直线
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import DataError, EstimationError
from core.types import ImpactWindow
from market.data import Dataset
from market.normalize import interval_sigma

from .metaorders import Metaorder, day_episodes

logger = logging.getLogger(__name__)


@dataclass
class PeakImpactFit:
    """δ̂ 为斜率，Ŷ 为截距的指数"""
    delta_hat: float
    Y_hat: float
    points: np.ndarray  # (n, 2): Q/V_D, I/σ_D（买方向对齐）
    n_discarded: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta_hat": self.delta_hat,
            "Y_hat": self.Y_hat,
            "n_points": int(len(self.points)),
            "n_discarded": self.n_discarded,
        }

    def points_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points, columns=["q_over_vd", "i_over_sigma"])


def impact_points(
    metaorders: Sequence[Metaorder],
    bars: Dataset,
    window: ImpactWindow = ImpactWindow.BIN,
) -> np.ndarray:
    """每个可测母单一行 (Q/V_D, sgn·I/σ_D)"""
    window = ImpactWindow(window)
    days = day_episodes(bars)
    sigma_cache: Dict[tuple, float] = {}
    rows = []
    for m in metaorders:
        ep = days.get(m.day)
        if ep is None or m.asset not in ep.assets:
            continue
        a = ep.assets.index(m.asset)
        key = (m.day, a)
        if key not in sigma_cache:
            sigma_cache[key] = interval_sigma(ep.bars(a))
        V_D = float(ep.unsigned_volume[:, a].sum())
        if V_D <= 0:
            continue
        if window is ImpactWindow.TICK:
            if np.isnan(m.pre_price):
                continue
            I = m.prices[-1] - m.pre_price
        else:
            I = ep.last[m.last_bin, a] - ep.first[m.first_bin, a]
        rows.append((m.total_volume / V_D, m.sign * I / sigma_cache[key]))
    return np.array(rows, dtype=float).reshape(-1, 2)


def peak_impact_fit(
    metaorders: Sequence[Metaorder],
    bars: Dataset,
    window: ImpactWindow = ImpactWindow.BIN,
    min_points: int = 50,
    points: Optional[np.ndarray] = None,
) -> PeakImpactFit:
    """只用买方向对齐后为正的点拟合 I/σ_D = Y (Q/V_D)^δ"""
    if points is None:
        points = impact_points(metaorders, bars, window)
    usable = points[(points[:, 0] > 0) & (points[:, 1] > 0)]
    n_discarded = len(points) - len(usable)
    if len(usable) < min_points:
        raise EstimationError(f"peak impact fit needs at least {min_points} points, got {len(usable)}")
    log_x = np.log(usable[:, 0])
    log_y = np.log(usable[:, 1])
    if np.ptp(log_x) == 0:
        raise DataError("degenerate abscissa: every point has the same Q/V_D")
    slope, intercept = np.polyfit(log_x, log_y, 1)
    logger.info(f"peak impact fit on {len(usable)} points: delta={slope:.4f}, Y={np.exp(intercept):.4f}")
    return PeakImpactFit(float(slope), float(np.exp(intercept)), usable, n_discarded)
