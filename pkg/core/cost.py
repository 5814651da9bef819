"""
执行成本、价格操纵构造与峰值冲击
"""
import logging
import math
from typing import Callable, Union

import numpy as np

from .errors import ManipulationNotFound
from .kernels import ImpactFunction, ImpactPair, KernelTensor, ParametricKernel, eval_parametric
from .types import CostReport, TradeSchedule

logger = logging.getLogger(__name__)


def extended_kernel(K: KernelTensor, lag: int) -> np.ndarray:
    """Ḡ_lag：Ḡ_0 = sym(G_0)，Ḡ_i = G_i，Ḡ_{-i} = G_iᵀ，超出支撑为 0"""
    if abs(lag) >= K.M:
        return np.zeros((K.d, K.d))
    if lag == 0:
        return 0.5 * (K.values[0] + K.values[0].T)
    if lag > 0:
        return K.values[lag]
    return K.values[-lag].T


def _grid_offsets(times: np.ndarray) -> np.ndarray:
    offsets = np.rint(times - times[0]).astype(int)
    if not np.allclose(offsets, times - times[0], atol=1e-9):
        raise ValueError("schedule times must lie on the bin grid (integer bin indices)")
    return offsets


def execution_cost(
    K: KernelTensor, h: Union[ImpactFunction, ImpactPair, float], s: TradeSchedule
) -> CostReport:
    """C = ½ Σ_{i,j} Q_iᵀ Ḡ_{i−j} h(Q_j)，按 (ℓ,k) 分解"""
    if s.d != K.d:
        raise ValueError(f"schedule has {s.d} assets, kernel has {K.d}")
    if len(s) > K.M:
        raise ValueError(f"schedule length {len(s)} exceeds kernel length M={K.M}")
    pair = ImpactPair.coerce(h)
    offsets = _grid_offsets(s.times)
    # transformed[j, ℓ, k] = h_{(ℓ,k)}(Q^k_j)
    transformed = np.empty((len(s), K.d, K.d))
    for row in range(K.d):
        for col in range(K.d):
            transformed[:, row, col] = impact_values(pair.exponent(row, col), s.volumes[:, col])
    per_pair = np.zeros((K.d, K.d))
    for i in range(len(s)):
        for j in range(len(s)):
            G = extended_kernel(K, int(offsets[i] - offsets[j]))
            per_pair += s.volumes[i][:, None] * G * transformed[j]
    per_pair *= 0.5
    return CostReport(total_cost=float(per_pair.sum()), per_pair=per_pair)


def impact_values(c: float, x: np.ndarray) -> np.ndarray:
    return ImpactFunction(c).apply(x)


KernelFunction = Callable[[np.ndarray], np.ndarray]


def kernel_function(
    kernel: Union[ParametricKernel, KernelTensor, KernelFunction], bin_seconds: float = 1.0
) -> KernelFunction:
    """连续时间核：参数核直接求值，离散核按滞后线性插值"""
    if isinstance(kernel, ParametricKernel):
        return lambda t: eval_parametric(kernel, t)
    if isinstance(kernel, KernelTensor):
        if kernel.d != 1:
            raise ValueError("continuous kernel evaluation requires d=1")
        step = kernel.bin_seconds or bin_seconds
        lags = np.arange(kernel.M) * step
        values = kernel.values[:, 0, 0]
        return lambda t: np.interp(t, lags, values)
    return kernel


def continuous_cost(
    kernel: Union[ParametricKernel, KernelTensor, KernelFunction],
    h: Union[ImpactFunction, float],
    times: np.ndarray,
    volumes: np.ndarray,
) -> float:
    """½ Σ x_i G(|t_i − t_j|) h(x_j)，单资产"""
    fn = kernel_function(kernel)
    h = h if isinstance(h, ImpactFunction) else ImpactFunction(float(h))
    x = np.asarray(volumes, dtype=float).ravel()
    t = np.asarray(times, dtype=float)
    lags = np.abs(t[:, None] - t[None, :])
    G = np.asarray(fn(lags), dtype=float)
    return float(0.5 * x @ G @ h.apply(x))


def construct_manipulation(
    kernel: Union[ParametricKernel, KernelTensor],
    h: Union[ImpactFunction, float],
    bin_seconds: float = 1.0,
    max_halvings: int = 60,
    t_star: float = 0.0,
) -> TradeSchedule:
    """构造执行成本为负的往返交易计划

    x = (a+ε, b, −a−b)，t_i = t* + i·δ_t；先缩小 ε，再缩小 δ_t。
    """
    h = h if isinstance(h, ImpactFunction) else ImpactFunction(float(h))
    fn = kernel_function(kernel, bin_seconds)
    G0 = float(fn(np.zeros(1))[0])
    if not G0 > 0:
        raise ManipulationNotFound(f"no manipulation found: kernel at lag 0 is {G0}, need > 0")

    a = b = -1.0
    s = h(a) + h(b) + h(-a - b)
    if abs(s) <= 1e-14 * (abs(h(a)) + abs(h(b)) + abs(h(-a - b))):
        raise ManipulationNotFound("no manipulation found: impact function is effectively linear")
    if s > 0:
        a, b = -a, -b
        s = -s
    logger.debug(f"manipulation seed a={a}, b={b}, s={s:.6g}")

    eps = abs(a) / 10.0
    for _ in range(max_halvings + 1):
        dt = bin_seconds / 10.0
        for _ in range(max_halvings + 1):
            times = t_star + dt * np.arange(3)
            volumes = np.array([a + eps, b, -a - b])
            cost = continuous_cost(fn, h, times, volumes)
            if cost < 0:
                logger.info(f"found manipulation with cost {cost:.6g} (eps={eps:.3g}, dt={dt:.3g})")
                return TradeSchedule(
                    times=times,
                    volumes=volumes,
                    metadata={"cost": cost, "epsilon": eps, "dt": dt, "a": a, "b": b, "s": s},
                )
            dt /= 2.0
        eps /= 2.0
    raise ManipulationNotFound(
        f"no manipulation found within {max_halvings} halvings of epsilon and dt"
    )


def peak_impact(Y: float, sigma_D: float, V_D: float, Q: float, delta_exp: float) -> float:
    """I = Y σ_D sgn(Q) |Q/V_D|^δ"""
    if not V_D > 0:
        raise ValueError(f"daily volume V_D must be positive, got {V_D}")
    if not sigma_D > 0:
        raise ValueError(f"daily volatility sigma_D must be positive, got {sigma_D}")
    if Q == 0:
        return 0.0
    return Y * sigma_D * math.copysign(abs(Q / V_D) ** delta_exp, Q)
