"""
母单代理：随机编号分组、TWAP episode 与峰值冲击拟合
"""
from .metaorders import (
    LABEL_COLUMN, METAORDER_COLUMN, METAORDER_CSV_COLUMNS, Metaorder, ProxyConfig, ProxyRun,
    assign_ids, build_proxy, calibrate_n_traders, day_episodes, group_metaorders, label_metaorders,
    metaorders_from_frame, metaorders_to_episodes, min_size_scatter, write_metaorders,
)
from .impact import PeakImpactFit, impact_points, peak_impact_fit

__all__ = [
    "LABEL_COLUMN", "METAORDER_COLUMN", "METAORDER_CSV_COLUMNS", "Metaorder", "ProxyConfig",
    "ProxyRun", "assign_ids", "build_proxy", "calibrate_n_traders", "day_episodes",
    "group_metaorders", "label_metaorders", "metaorders_from_frame", "metaorders_to_episodes",
    "min_size_scatter", "write_metaorders", "PeakImpactFit", "impact_points", "peak_impact_fit",
]
