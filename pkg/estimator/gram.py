"""
正规方程的流式累加、岭回归求解与置信半径
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, block_diag, cho_factor, cho_solve, solve_triangular

from core.errors import DimensionError, EstimationError
from core.kernels import KernelTensor
from core.scheduler import TaskScheduler, chunked, resolve_scheduler
from market.data import NormalizedEpisode

from .design import DesignOperator, build_design

logger = logging.getLogger(__name__)

LambdaLike = Union[None, float, np.ndarray]
DEFAULT_LAMBDA_SCALE = 1e-3
CHUNK_SIZE = 64


@dataclass
class GramState:
    """W = Σ UᵀU + diag(Λ)，b = Σ Uᵀy

    U 按 ℓ 分块对角，所以只保存 d 个 (M·d)×(M·d) 对角块。
    """
    M: int
    d: int
    gram: np.ndarray  # (d, M·d, M·d)
    moment: np.ndarray  # (d, M·d)
    n_episodes: int = 0
    lam: Optional[np.ndarray] = None  # (d, d)，None 表示使用默认规则
    c_S: float = 1.0
    c_X: float = 1.0
    sum_sq: float = 0.0  # Σ‖y‖²，用于残差平方和

    @classmethod
    def empty(cls, M: int, d: int, lam: LambdaLike = None, c_S: float = 1.0, c_X: float = 1.0) -> "GramState":
        size = M * d
        return cls(
            M=M, d=d,
            gram=np.zeros((d, size, size)),
            moment=np.zeros((d, size)),
            lam=_coerce_lambda(lam, d),
            c_S=c_S, c_X=c_X,
        )

    @property
    def size(self) -> int:
        return self.M * self.d * self.d

    def lambda_matrix(self) -> np.ndarray:
        if self.lam is not None:
            return self.lam
        return np.full((self.d, self.d), default_lambda(self))

    def lambda_block(self, row: int) -> np.ndarray:
        """第 ℓ 块对角上的正则项：位置 j·d + k 取 λ^{(ℓ,k)}"""
        return np.tile(self.lambda_matrix()[row], self.M)

    def lambda_vector(self) -> np.ndarray:
        return np.concatenate([self.lambda_block(row) for row in range(self.d)])

    def block_W(self, row: int) -> np.ndarray:
        return self.gram[row] + np.diag(self.lambda_block(row))

    @property
    def W(self) -> np.ndarray:
        return block_diag(*[self.block_W(row) for row in range(self.d)])

    @property
    def b(self) -> np.ndarray:
        return self.moment.reshape(-1)

    @property
    def uniform_lambda(self) -> bool:
        lam = self.lambda_matrix()
        return bool(np.all(lam == lam.flat[0]))

    def with_lambda(self, lam: LambdaLike) -> "GramState":
        return replace(self, lam=_coerce_lambda(lam, self.d))

    def merge(self, other: "GramState") -> "GramState":
        """两个部分累加状态相加（λ 取自 self）"""
        if (self.M, self.d) != (other.M, other.d):
            raise DimensionError(f"cannot merge states of shape {(self.M, self.d)} and {(other.M, other.d)}")
        _check_concavity(self, other.c_S, other.c_X, other.n_episodes)
        return replace(
            self,
            gram=self.gram + other.gram,
            moment=self.moment + other.moment,
            n_episodes=self.n_episodes + other.n_episodes,
            sum_sq=self.sum_sq + other.sum_sq,
            c_S=other.c_S if self.n_episodes == 0 else self.c_S,
            c_X=other.c_X if self.n_episodes == 0 else self.c_X,
        )


def _coerce_lambda(lam: LambdaLike, d: int) -> Optional[np.ndarray]:
    if lam is None:
        return None
    arr = np.asarray(lam, dtype=float)
    if arr.ndim == 0:
        arr = np.full((d, d), float(arr))
    if arr.shape != (d, d):
        raise DimensionError(f"lambda grid must have shape ({d}, {d}), got {arr.shape}")
    if np.any(arr <= 0):
        raise EstimationError("all regularization parameters must be positive")
    return arr


def _check_concavity(state: GramState, c_S: float, c_X: float, incoming: int = 1) -> None:
    if state.n_episodes and incoming and (state.c_S, state.c_X) != (c_S, c_X):
        raise EstimationError(
            f"state accumulated with (c_S, c_X)=({state.c_S}, {state.c_X}), got ({c_S}, {c_X})"
        )


def default_lambda(state: GramState) -> float:
    """λ = 10⁻³·trace(ΣUᵀU)/(M·d²)"""
    trace = float(sum(np.trace(state.gram[row]) for row in range(state.d)))
    if trace <= 0:
        return 1.0
    return DEFAULT_LAMBDA_SCALE * trace / state.size


def episode_contribution(design: DesignOperator, M: int, d: int) -> GramState:
    """单个 episode 的 UᵀU 与 Uᵀy"""
    if (design.M, design.d) != (M, d):
        raise DimensionError(
            f"episode shape (M={design.M}, d={design.d}) does not match state (M={M}, d={d})"
        )
    state = GramState.empty(M, d, c_S=design.c_S, c_X=design.c_X)
    y = design.returns
    blocks = design.blocks()
    if design.homogeneous:
        DtD = blocks[0].T @ blocks[0]
        state.gram[:] = DtD
    for row, D in enumerate(blocks):
        if not design.homogeneous:
            state.gram[row] = D.T @ D
        state.moment[row] = D.T @ y[:, row]
    state.n_episodes = 1
    state.sum_sq = float(np.sum(y * y))
    return state


def accumulate(state: GramState, ep: NormalizedEpisode, c_S: float = 1.0, c_X: float = 1.0) -> GramState:
    """W += UᵀU, b += Uᵀy, n += 1（返回新状态）"""
    if (ep.M, ep.d) != (state.M, state.d):
        raise DimensionError(
            f"episode shape (M={ep.M}, d={ep.d}) does not match state (M={state.M}, d={state.d})"
        )
    _check_concavity(state, c_S, c_X)
    return state.merge(episode_contribution(build_design(ep, c_S, c_X), state.M, state.d))


def _accumulate_chunk(args: Tuple[Sequence[NormalizedEpisode], int, int, float, float]) -> GramState:
    episodes, M, d, c_S, c_X = args
    part = GramState.empty(M, d, c_S=c_S, c_X=c_X)
    for ep in episodes:
        contrib = episode_contribution(build_design(ep, c_S, c_X), M, d)
        part.gram += contrib.gram
        part.moment += contrib.moment
        part.sum_sq += contrib.sum_sq
        part.n_episodes += 1
    return part


def accumulate_many(
    state: GramState,
    episodes: Sequence[NormalizedEpisode],
    c_S: float = 1.0,
    c_X: float = 1.0,
    scheduler: Optional[TaskScheduler] = None,
) -> GramState:
    """并行计算各块贡献，按顺序合并"""
    _check_concavity(state, c_S, c_X)
    chunks = chunked(list(episodes), CHUNK_SIZE)
    parts = resolve_scheduler(scheduler).map(
        _accumulate_chunk, [(chunk, state.M, state.d, c_S, c_X) for chunk in chunks]
    )
    for part in parts:
        state = state.merge(part)
    logger.debug(f"accumulated {len(episodes)} episodes, total {state.n_episodes}")
    return state


def gram_from_episodes(
    episodes: Sequence[NormalizedEpisode],
    c_S: float = 1.0,
    c_X: float = 1.0,
    lam: LambdaLike = None,
    scheduler: Optional[TaskScheduler] = None,
) -> GramState:
    if not episodes:
        raise EstimationError("no episodes to accumulate")
    M, d = episodes[0].M, episodes[0].d
    return accumulate_many(GramState.empty(M, d, lam, c_S, c_X), episodes, c_S, c_X, scheduler)


@dataclass
class RidgeEstimate:
    """无约束岭回归估计 G̃ = W⁻¹b"""
    G_raw: KernelTensor
    log_det_W: float
    lam: np.ndarray
    factors: List[Tuple[np.ndarray, bool]] = field(repr=False, default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def W_half_log_det(self) -> float:
        return 0.5 * self.log_det_W


def factorize(state: GramState) -> Tuple[List[Tuple[np.ndarray, bool]], float]:
    factors = []
    log_det = 0.0
    for row in range(state.d):
        try:
            factor = cho_factor(state.block_W(row), lower=True, check_finite=True)
        except LinAlgError as e:
            raise EstimationError(f"Cholesky factorization failed (lambda too small?): {e}") from None
        factors.append(factor)
        log_det += 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return factors, log_det


def solve_ridge(state: GramState) -> RidgeEstimate:
    """对称正定分解求解 W G̃ = b"""
    lam = state.lambda_matrix()
    if np.any(lam <= 0):
        raise EstimationError("all regularization parameters must be positive")
    factors, log_det = factorize(state)
    solution = np.concatenate([cho_solve(factors[row], state.moment[row]) for row in range(state.d)])

    width = state.M * state.d
    residual = np.concatenate([
        state.block_W(row) @ solution[row * width:(row + 1) * width] - state.moment[row]
        for row in range(state.d)
    ])
    b_norm = float(np.linalg.norm(state.b))
    res_norm = float(np.linalg.norm(residual))
    if res_norm > 1e-8 * max(b_norm, np.finfo(float).tiny):
        logger.warning(f"ridge residual {res_norm:.3g} exceeds 1e-8 * |b| = {1e-8 * b_norm:.3g}")
    diag = np.concatenate([np.diag(f[0]) ** 2 for f in factors])
    diagnostics = {
        "residual_norm": res_norm,
        "b_norm": b_norm,
        "pivot_ratio": float(diag.max() / diag.min()),
    }
    G = KernelTensor.from_vec(solution, state.M, state.d, metadata={"estimator": "raw"})
    logger.info(f"solved ridge system of size {state.size} (log det W = {log_det:.6g})")
    return RidgeEstimate(G_raw=G, log_det_W=log_det, lam=lam, factors=factors, diagnostics=diagnostics)


def _blocks_of(state: GramState, G: KernelTensor) -> np.ndarray:
    if (G.M, G.d) != (state.M, state.d):
        raise DimensionError(
            f"kernel shape (M={G.M}, d={G.d}) does not match state (M={state.M}, d={state.d})"
        )
    return G.vec().reshape(state.d, state.M * state.d)


def w_inv_sqrt_norm(state: GramState, G: KernelTensor, factors=None) -> float:
    """‖W^{-1/2}G‖ = ‖L⁻¹G‖，W = LLᵀ"""
    if factors is None:
        factors, _ = factorize(state)
    blocks = _blocks_of(state, G)
    total = 0.0
    for row, (c, lower) in enumerate(factors):
        z = solve_triangular(c, blocks[row], lower=lower, trans=0 if lower else 1)
        total += float(z @ z)
    return math.sqrt(total)


def w_norm(state: GramState, G: KernelTensor) -> float:
    """‖W^{1/2}G‖"""
    blocks = _blocks_of(state, G)
    total = sum(float(blocks[row] @ state.block_W(row) @ blocks[row]) for row in range(state.d))
    return math.sqrt(max(total, 0.0))


def w_norm_error(state: GramState, G: KernelTensor, G_ref: KernelTensor) -> Dict[str, float]:
    """‖W^{1/2}(G − G_ref)‖ 及其相对值"""
    absolute = w_norm(state, G.like(G.values - G_ref.values))
    ref = w_norm(state, G_ref)
    return {"absolute": absolute, "relative": absolute / ref if ref > 0 else math.inf}


def confidence_radius(
    state: GramState,
    R: float,
    delta: float,
    G_ref: KernelTensor,
    ridge: Optional[RidgeEstimate] = None,
) -> float:
    """R·√(2·log(det W/(δ²λ^{Md²}))) + λ·‖W^{-1/2}G_ref‖"""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    if not state.uniform_lambda:
        raise EstimationError("confidence radius requires a uniform regularization parameter")
    lam = float(state.lambda_matrix().flat[0])
    if ridge is not None:
        factors, log_det = ridge.factors, ridge.log_det_W
    else:
        factors, log_det = factorize(state)
    log_arg = log_det - 2.0 * math.log(delta) - state.size * math.log(lam)
    first = R * math.sqrt(2.0 * max(log_arg, 0.0))
    return first + lam * w_inv_sqrt_norm(state, G_ref, factors)


def fitted_residuals(design: DesignOperator, G: KernelTensor) -> np.ndarray:
    """y − U·vec(G)，形状 (M, d)"""
    return design.returns - design.apply(G)


def residual_sum_of_squares(state: GramState, G: KernelTensor) -> float:
    """Σ‖y − UG‖²，只用累加量：Σ‖y‖² − 2Gᵀb + GᵀΣUᵀU G"""
    blocks = _blocks_of(state, G)
    quad = sum(float(blocks[row] @ state.gram[row] @ blocks[row]) for row in range(state.d))
    return state.sum_sq - 2.0 * float(blocks.reshape(-1) @ state.b) + quad
