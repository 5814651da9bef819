"""
回归算子：D_ℓ 为 h 变换成交量组成的下三角分块 Toeplitz 矩阵，U = blockdiag(D_1..D_d)
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from core.kernels import ImpactPair, KernelTensor, impact_h
from market.data import NormalizedEpisode


@dataclass(frozen=True)
class DesignOperator:
    """单个 episode 的设计算子（隐式块结构）"""
    volumes: np.ndarray  # (M, d)
    c_S: float = 1.0
    c_X: float = 1.0
    returns: Optional[np.ndarray] = None  # (M, d)

    @property
    def M(self) -> int:
        return self.volumes.shape[0]

    @property
    def d(self) -> int:
        return self.volumes.shape[1]

    @property
    def pair(self) -> ImpactPair:
        return ImpactPair(self.c_S, self.c_X)

    @property
    def homogeneous(self) -> bool:
        """c_S = c_X 时所有 D_ℓ 相同"""
        return self.c_S == self.c_X or self.d == 1

    def transformed(self, row: int) -> np.ndarray:
        """H_ℓ[:, k] = h_{c(ℓ,k)}(Q^k)"""
        out = impact_h(self.c_X, self.volumes) if self.d > 1 else np.empty_like(self.volumes)
        out[:, row] = impact_h(self.c_S, self.volumes[:, row])
        return out

    def block(self, row: int) -> np.ndarray:
        """D_ℓ[i, j'·d + k] = h(Q^k_{i−j'})，j' ≤ i"""
        H = self.transformed(row)
        M, d = self.M, self.d
        D = np.zeros((M, M * d))
        for lag in range(M):
            D[lag:, lag * d:(lag + 1) * d] = H[:M - lag]
        return D

    def blocks(self):
        if self.homogeneous:
            D = self.block(0)
            return [D] * self.d
        return [self.block(row) for row in range(self.d)]

    def matrix(self) -> np.ndarray:
        return block_diag(*self.blocks())

    def apply(self, K: KernelTensor) -> np.ndarray:
        """U·vec(G)，返回 (M, d) 的模型收益"""
        if K.M != self.M or K.d != self.d:
            raise ValueError(
                f"kernel shape (M={K.M}, d={K.d}) does not match design (M={self.M}, d={self.d})"
            )
        out = np.empty((self.M, self.d))
        g = K.vec().reshape(self.d, self.M * self.d)
        for row, D in enumerate(self.blocks()):
            out[:, row] = D @ g[row]
        return out

    def target(self) -> np.ndarray:
        """y：ℓ 最慢、i 最快的堆叠收益向量"""
        if self.returns is None:
            raise ValueError("design operator carries no returns")
        return self.returns.T.reshape(-1)


def build_design(ep: NormalizedEpisode, c_S: float = 1.0, c_X: float = 1.0) -> DesignOperator:
    """由归一化 episode 构建设计算子"""
    pair = ImpactPair(c_S, c_X)
    return DesignOperator(volumes=ep.volumes, c_S=pair.c_S, c_X=pair.c_X, returns=ep.returns)
