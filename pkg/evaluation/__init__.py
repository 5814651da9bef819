"""
评估：参数化基准、多步预测 R²、滚动窗口与凹性扫描
"""
from .metrics import (
    as_normalized, horizon_r2, impact_path, pooled_predictions, predict_returns, r_squared,
    realized_changes,
)
from .parametric import ParamGrid, ParametricFit, fit_parametric
from .models import FittedModel, ModelRegistry, ModelSpec, default_registry
from .rolling import (
    REPORT_COLUMNS, EvalReport, RollingScheme, SweepResult, binning_robustness, concavity_sweep,
    kernel_shape_table, make_windows, rolling_eval,
)

__all__ = [
    "as_normalized", "horizon_r2", "impact_path", "pooled_predictions", "predict_returns",
    "r_squared", "realized_changes",
    "ParamGrid", "ParametricFit", "fit_parametric",
    "FittedModel", "ModelRegistry", "ModelSpec", "default_registry",
    "REPORT_COLUMNS", "EvalReport", "RollingScheme", "SweepResult", "binning_robustness",
    "concavity_sweep", "kernel_shape_table", "make_windows", "rolling_eval",
]
