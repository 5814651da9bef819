"""
proplab - 凹性多资产传播核估计

包含功能:
- 行情 episode 读取与归一化
- 凹性冲击函数与传播核张量
- 流式岭回归 (RAW) 与形状约束投影 (PROJ)
- 母单代理、合成数据与滚动评估
"""

__version__ = "0.1.0"

from core.types import KernelFamily, ModelKind, FlowKind, ImpactWindow, TradeSchedule, CostReport
from core.kernels import ImpactFunction, ImpactPair, ParametricKernel, KernelTensor, admissibility_check
from core.cost import construct_manipulation, execution_cost
from market import Dataset, Episode, NormalizedEpisode, load_episodes, normalize_dataset
from estimator import EstimateSettings, EstimateResult, estimate
from projection import ProjectionSettings, project
from proxy import ProxyConfig, build_proxy, peak_impact_fit
from simulator import SimConfig, TickSimConfig, simulate_dataset, simulate_ticks
from evaluation import ModelSpec, RollingScheme, rolling_eval, concavity_sweep, fit_parametric

__all__ = [
    # Core types
    "KernelFamily", "ModelKind", "FlowKind", "ImpactWindow", "TradeSchedule", "CostReport",
    # Impact core
    "ImpactFunction", "ImpactPair", "ParametricKernel", "KernelTensor", "admissibility_check",
    "construct_manipulation", "execution_cost",
    # Data
    "Dataset", "Episode", "NormalizedEpisode", "load_episodes", "normalize_dataset",
    # Estimation
    "EstimateSettings", "EstimateResult", "estimate", "ProjectionSettings", "project",
    # Proxy / simulation
    "ProxyConfig", "build_proxy", "peak_impact_fit",
    "SimConfig", "TickSimConfig", "simulate_dataset", "simulate_ticks",
    # Evaluation
    "ModelSpec", "RollingScheme", "rolling_eval", "concavity_sweep", "fit_parametric",
]
