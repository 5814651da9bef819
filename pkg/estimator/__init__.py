"""
估计器：设计算子、流式正规方程、岭回归与置信半径
"""
from .design import DesignOperator, build_design
from .gram import (
    GramState, RidgeEstimate, accumulate, accumulate_many, gram_from_episodes, default_lambda,
    solve_ridge, confidence_radius, w_norm, w_norm_error, w_inv_sqrt_norm, fitted_residuals,
    residual_sum_of_squares,
)
from .pipeline import EstimateSettings, EstimateResult, estimate

__all__ = [
    "DesignOperator", "build_design",
    "GramState", "RidgeEstimate", "accumulate", "accumulate_many", "gram_from_episodes",
    "default_lambda", "solve_ridge", "confidence_radius", "w_norm", "w_norm_error",
    "w_inv_sqrt_norm", "fitted_residuals", "residual_sum_of_squares",
    "EstimateSettings", "EstimateResult", "estimate",
]
