"""
W 度量下到可容许锥的投影：带过松弛和残差平衡的 ADMM
"""
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from core.errors import EstimationError
from core.kernels import KernelTensor, admissibility_check

from .cone import constraint_operator, project_blocks

if TYPE_CHECKING:
    from estimator.gram import GramState

logger = logging.getLogger(__name__)


@dataclass
class ProjectionSettings:
    """投影求解器配置"""
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    max_iter: int = 20000
    penalty: float = 1.0
    symmetry_flag: bool = False
    relaxation: float = 1.6
    balance_every: int = 50
    balance_ratio: float = 10.0

    def __post_init__(self):
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("projection tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")

    @classmethod
    def from_dict(cls, raw: Optional[Dict[str, Any]]) -> "ProjectionSettings":
        data = raw or {}
        defaults = cls()
        return cls(
            tol_primal=float(data.get("tol_primal", defaults.tol_primal)),
            tol_dual=float(data.get("tol_dual", defaults.tol_dual)),
            max_iter=int(data.get("max_iter", defaults.max_iter)),
            penalty=float(data.get("penalty", defaults.penalty)),
            symmetry_flag=bool(data.get("symmetry_flag", defaults.symmetry_flag)),
            relaxation=float(data.get("relaxation", defaults.relaxation)),
            balance_every=int(data.get("balance_every", defaults.balance_every)),
            balance_ratio=float(data.get("balance_ratio", defaults.balance_ratio)),
        )


@dataclass
class ProjectionResult:
    """投影结果"""
    G_proj: KernelTensor
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool = True
    history: Dict[str, Any] = field(default_factory=dict, repr=False)

    def report(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective": self.objective,
            "converged": self.converged,
        }


def _as_matrix(W: Union[np.ndarray, "GramState"]) -> np.ndarray:
    """接受稠密矩阵或累加状态"""
    return W.W if hasattr(W, "block_W") else np.asarray(W, dtype=float)


def project(
    G_raw: KernelTensor,
    W: Union[np.ndarray, "GramState"],
    settings: Optional[ProjectionSettings] = None,
) -> ProjectionResult:
    """min (G−G̃)ᵀW(G−G̃)  s.t.  sym(G_i), sym(G_i−G_{i+1}), sym(G_i−2G_{i+1}+G_{i+2}) ⪰ 0"""
    settings = settings or ProjectionSettings()
    W = _as_matrix(W)
    M, d = G_raw.M, G_raw.d
    n = M * d * d
    if W.shape != (n, n):
        raise EstimationError(f"W has shape {W.shape}, expected ({n}, {n})")

    C = constraint_operator(M, d)
    CT = C.T.tocsr()
    CtC = (CT @ C).toarray()
    m = C.shape[0]
    x_raw = G_raw.vec()
    Wx_raw = W @ x_raw

    def proj(v: np.ndarray) -> np.ndarray:
        return project_blocks(v.reshape(-1, d, d), settings.symmetry_flag).reshape(-1)

    def factorize(rho_: float):
        try:
            return cho_factor(W + rho_ * CtC, lower=True)
        except LinAlgError as e:
            raise EstimationError(f"projection system is not positive definite: {e}") from None

    scale = float(np.mean(np.diag(W)))
    rho = settings.penalty * (scale if scale > 0 else 1.0)
    factor = factorize(rho)
    alpha = settings.relaxation

    x = x_raw.copy()
    z = proj(C @ x)
    u = np.zeros(m)
    best = None
    r_norm = s_norm = math.inf
    converged = False
    it = 0

    for it in range(1, settings.max_iter + 1):
        x = cho_solve(factor, Wx_raw + rho * (CT @ (z - u)))
        Cx = C @ x
        Cx_hat = alpha * Cx + (1.0 - alpha) * z
        z_old = z
        z = proj(Cx_hat + u)
        u = u + Cx_hat - z

        r_norm = float(np.linalg.norm(Cx - z))
        s_norm = float(rho * np.linalg.norm(CT @ (z - z_old)))
        eps_pri = settings.tol_primal * (math.sqrt(m) + max(np.linalg.norm(Cx), np.linalg.norm(z)))
        eps_dual = settings.tol_dual * (math.sqrt(n) + rho * np.linalg.norm(CT @ u))

        score = max(r_norm / eps_pri, s_norm / eps_dual)
        if best is None or score < best[0]:
            best = (score, x.copy(), r_norm, s_norm)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            G = KernelTensor.from_vec(x, M, d)
            if admissibility_check(G, settings.tol_primal, symmetric=settings.symmetry_flag):
                converged = True
                break

        if settings.balance_every and it % settings.balance_every == 0:
            mu = settings.balance_ratio
            if r_norm > mu * s_norm:
                rho, u = rho * 2.0, u / 2.0
                factor = factorize(rho)
            elif s_norm > mu * r_norm:
                rho, u = rho / 2.0, u * 2.0
                factor = factorize(rho)

    if not converged:
        _, x, r_norm, s_norm = best
        logger.warning(
            f"projection did not converge in {settings.max_iter} iterations "
            f"(primal {r_norm:.3g}, dual {s_norm:.3g}); returning best iterate"
        )
    else:
        logger.debug(f"projection converged in {it} iterations")

    diff = x - x_raw
    objective = float(diff @ W @ diff)
    G_proj = G_raw.like(KernelTensor.from_vec(x, M, d).values, estimator="proj")
    return ProjectionResult(
        G_proj=G_proj,
        iterations=it,
        primal_residual=r_norm,
        dual_residual=s_norm,
        objective=max(objective, 0.0),
        converged=converged,
        history={"rho": rho},
    )


def w_objective(G: KernelTensor, G_raw: KernelTensor, W: Union[np.ndarray, "GramState"]) -> float:
    """(G−G̃)ᵀW(G−G̃)"""
    diff = G.vec() - G_raw.vec()
    return float(diff @ _as_matrix(W) @ diff)
