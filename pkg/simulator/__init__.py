"""
已知真实核的合成数据
"""
from .simulate import (
    SimConfig, SimulationResult, TickSimConfig, default_truth, simulate_dataset, simulate_ticks,
    truth_kernels, truth_tensor,
)

__all__ = [
    "SimConfig", "SimulationResult", "TickSimConfig", "default_truth", "simulate_dataset",
    "simulate_ticks", "truth_kernels", "truth_tensor",
]
