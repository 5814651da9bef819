"""
异常层次 - 所有库错误都继承自 ProplabError
"""
from typing import Any, Optional


class ProplabError(Exception):
    """库内错误基类"""

    exit_code: int = 3


class DataError(ProplabError):
    """输入数据不合法（缺列、M 不一致、非正价格等）"""


class DimensionError(ProplabError):
    """维度不匹配"""


class ConfigError(ProplabError):
    """配置校验失败"""

    exit_code = 2

    def __init__(self, message: str, field_path: Optional[str] = None):
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)
        self.field_path = field_path


class EstimationError(ProplabError):
    """估计失败：分解失败、尺寸超限、Λ 非均匀等"""


class ConvergenceError(ProplabError):
    """投影未收敛，附带最佳迭代结果"""

    exit_code = 4

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        self.result = result


class ManipulationNotFound(ProplabError):
    """在迭代上限内没有找到负成本交易计划"""
