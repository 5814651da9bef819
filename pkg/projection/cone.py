"""
可容许锥的约束算子与半正定截断
"""
from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.sparse as sp

# 约束族：(名称, 系数)；第 i 个块为 Σ_j coef_j · G_{i+j}
FAMILIES: Tuple[Tuple[str, Tuple[float, ...]], ...] = (
    ("nonneg", (1.0,)),
    ("nonincreasing", (1.0, -1.0)),
    ("convex", (1.0, -2.0, 1.0)),
)


def vec_index(M: int, d: int, lag: int, row: int, col: int) -> int:
    """G^{(ℓ,k)}_i 在 vec(G) 中的位置"""
    return row * M * d + lag * d + col


def family_lags(M: int) -> Tuple[int, ...]:
    return tuple(max(M - len(coefs) + 1, 0) for _, coefs in FAMILIES)


@lru_cache(maxsize=32)
def constraint_operator(M: int, d: int) -> sp.csr_matrix:
    """C：vec(G) ↦ 各约束块按 (族, 滞后, ℓ, k) 行主序堆叠"""
    rows, cols, vals = [], [], []
    offset = 0
    for (_, coefs), n_lags in zip(FAMILIES, family_lags(M)):
        for lag in range(n_lags):
            for row in range(d):
                for col in range(d):
                    r = offset + (lag * d + row) * d + col
                    for shift, coef in enumerate(coefs):
                        rows.append(r)
                        cols.append(vec_index(M, d, lag + shift, row, col))
                        vals.append(coef)
        offset += n_lags * d * d
    return sp.csr_matrix((vals, (rows, cols)), shape=(offset, M * d * d))


def psd_clip(A: np.ndarray) -> np.ndarray:
    """Frobenius 意义下最近的半正定矩阵（负特征值置零），支持批量 (n, d, d)"""
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + np.swapaxes(A, -1, -2))
    eigval, eigvec = np.linalg.eigh(sym)
    clipped = np.clip(eigval, 0.0, None)
    out = (eigvec * clipped[..., None, :]) @ np.swapaxes(eigvec, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def project_blocks(Z: np.ndarray, symmetric: bool = False) -> np.ndarray:
    """投影到 {Z : sym(Z) ⪰ 0}；symmetric 时投影到对称半正定锥"""
    if Z.shape[-1] == 1:
        return np.maximum(Z, 0.0)
    clipped = psd_clip(Z)
    if symmetric:
        return clipped
    skew = 0.5 * (Z - np.swapaxes(Z, -1, -2))
    return clipped + skew
