"""
稠密验证器：对偶 NNLS 精确求解同一约束二次规划（仅限小规模）
"""
import logging
from typing import List

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import nnls

from core.errors import EstimationError
from core.kernels import KernelTensor, constraint_blocks

from .cone import FAMILIES, family_lags, vec_index

logger = logging.getLogger(__name__)

ORACLE_SIZE_CAP = 200


def _direction_row(M: int, d: int, family: int, lag: int, v: np.ndarray) -> np.ndarray:
    """vᵀ(Σ_j coef_j G_{lag+j})v 对 vec(G) 的系数"""
    row = np.zeros(M * d * d)
    coefs = FAMILIES[family][1]
    outer = np.outer(v, v)
    for shift, coef in enumerate(coefs):
        for ell in range(d):
            for k in range(d):
                row[vec_index(M, d, lag + shift, ell, k)] += coef * outer[ell, k]
    return row


def initial_constraints(M: int, d: int, n_directions: int = 64) -> np.ndarray:
    """d=1 时为显式标量约束；d=2 时为方向网 v = (cos θ, sin θ)"""
    if d == 1:
        directions = [np.ones(1)]
    else:
        angles = np.pi * np.arange(n_directions) / n_directions
        directions = [np.array([np.cos(a), np.sin(a)]) for a in angles]
    rows = []
    for family, n_lags in enumerate(family_lags(M)):
        for lag in range(n_lags):
            for v in directions:
                rows.append(_direction_row(M, d, family, lag, v))
    return np.array(rows).reshape(-1, M * d * d)


def _violated_directions(G: KernelTensor, tol: float) -> List[np.ndarray]:
    rows = []
    for family, blocks in enumerate(constraint_blocks(G.values).values()):
        if blocks.shape[0] == 0:
            continue
        sym = 0.5 * (blocks + blocks.transpose(0, 2, 1))
        eigval, eigvec = np.linalg.eigh(sym)
        for lag in np.flatnonzero(eigval[:, 0] < -tol):
            rows.append(_direction_row(G.M, G.d, family, int(lag), eigvec[lag, :, 0]))
    return rows


def project_dense_oracle(
    G_raw: KernelTensor,
    W: np.ndarray,
    tol: float = 1e-10,
    max_rounds: int = 50,
    n_directions: int = 64,
) -> KernelTensor:
    """min (G−G̃)ᵀW(G−G̃)，约束 Ag ≥ 0

    W = RᵀR，B = AR⁻¹；对偶为 NNLS：μ = argmin_{μ≥0} ‖Bᵀμ + Rg̃‖，g = g̃ + R⁻¹Bᵀμ。
    """
    M, d = G_raw.M, G_raw.d
    n = M * d * d
    if n > ORACLE_SIZE_CAP:
        raise EstimationError(f"dense oracle limited to M*d^2 <= {ORACLE_SIZE_CAP}, got {n}")
    if d > 2:
        raise EstimationError("dense oracle supports d <= 2")
    W = np.asarray(W, dtype=float)
    if W.shape != (n, n):
        raise EstimationError(f"W has shape {W.shape}, expected ({n}, {n})")
    try:
        R = cholesky(W, lower=False)
    except LinAlgError as e:
        raise EstimationError(f"W is not positive definite: {e}") from None

    g_raw = G_raw.vec()
    w_raw = R @ g_raw
    A = initial_constraints(M, d, n_directions)
    for round_ in range(max_rounds):
        Bt = solve_triangular(R, A.T, trans="T", lower=False)
        mu, _ = nnls(Bt, -w_raw, maxiter=50 * max(Bt.shape))
        w = w_raw + Bt @ mu
        g = solve_triangular(R, w, lower=False)
        G = KernelTensor.from_vec(g, M, d)
        extra = _violated_directions(G, tol) if d > 1 else []
        if not extra:
            kkt = _kkt_residual(A, W, g, g_raw, mu)
            logger.debug(f"oracle solved after {round_ + 1} rounds, KKT residual {kkt:.3g}")
            return G_raw.like(G.values, estimator="oracle", kkt_residual=kkt)
        A = np.vstack([A] + extra)
    raise EstimationError(f"dense oracle did not reach feasibility within {max_rounds} rounds")


def _kkt_residual(A: np.ndarray, W: np.ndarray, g: np.ndarray, g_raw: np.ndarray, mu: np.ndarray) -> float:
    """平稳性、原始可行性与互补松弛的最大违反量"""
    slack = A @ g
    stationarity = np.abs(W @ (g - g_raw) - A.T @ mu).max(initial=0.0)
    feasibility = max(-slack.min(initial=0.0), 0.0)
    complementarity = np.abs(mu * slack).max(initial=0.0)
    return float(max(stationarity, feasibility, complementarity))

