"""
形状约束投影：W 度量下投影到可容许锥
"""
from .cone import constraint_operator, psd_clip, project_blocks, vec_index
from .admm import ProjectionSettings, ProjectionResult, project, w_objective
from .oracle import ORACLE_SIZE_CAP, project_dense_oracle

__all__ = [
    "constraint_operator", "psd_clip", "project_blocks", "vec_index",
    "ProjectionSettings", "ProjectionResult", "project", "w_objective",
    "ORACLE_SIZE_CAP", "project_dense_oracle",
]
