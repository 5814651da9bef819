"""Core components"""
from .types import *
from .errors import (
    ProplabError, DataError, DimensionError, ConfigError, EstimationError, ConvergenceError,
    ManipulationNotFound,
)
from .kernels import (
    ImpactFunction, ImpactPair, ParametricKernel, KernelTensor, AdmissibilityReport,
    admissibility_check, eval_parametric, sample_to_tensor,
)
from .cost import construct_manipulation, continuous_cost, execution_cost, peak_impact
from .scheduler import TaskScheduler
