"""
多步收益预测与合并 R²
"""
from typing import List, Sequence, Tuple, Union

import numpy as np

from core.kernels import KernelTensor
from estimator.design import DesignOperator
from market.data import Dataset, NormalizedEpisode
from market.normalize import normalize_dataset

EpisodeSource = Union[Dataset, Sequence[NormalizedEpisode]]


def as_normalized(data: EpisodeSource) -> List[NormalizedEpisode]:
    if isinstance(data, Dataset):
        return normalize_dataset(data)
    return list(data)


def impact_path(K: KernelTensor, c_S: float, c_X: float, episode: NormalizedEpisode) -> np.ndarray:
    """I_0 = 0，I_m = (U·vec(G))_{m−1}；形状 (M+1, d)"""
    model = DesignOperator(episode.volumes, c_S, c_X).apply(K)
    return np.vstack([np.zeros((1, episode.d)), model])


def _check_horizon(M: int, horizon: int) -> None:
    if not (1 <= horizon <= M):
        raise ValueError(f"horizon must lie in [1, {M}], got {horizon}")


def predict_returns(
    K: KernelTensor, c_S: float, c_X: float, episode: NormalizedEpisode, horizon: int
) -> np.ndarray:
    """第 i 行为 I_{t_{i+H}} − I_{t_i}，i = 0..M−H"""
    _check_horizon(episode.M, horizon)
    path = impact_path(K, c_S, c_X, episode)
    return path[horizon:] - path[:-horizon]


def realized_changes(episode: NormalizedEpisode, horizon: int) -> np.ndarray:
    """与 predict_returns 对齐的实际归一化收益变化"""
    _check_horizon(episode.M, horizon)
    path = np.vstack([np.zeros((1, episode.d)), episode.returns])
    return path[horizon:] - path[:-horizon]


def r_squared(predictions, actuals) -> float:
    """1 − Σ(a−p)²/Σ(a−ā)²，所有元素合并计算"""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    a = np.asarray(actuals, dtype=float).reshape(-1)
    if p.shape != a.shape:
        raise ValueError(f"predictions and actuals differ in length: {p.size} vs {a.size}")
    if a.size < 2:
        raise ValueError("r_squared needs at least 2 points")
    tss = float(np.sum((a - a.mean()) ** 2))
    if tss == 0:
        raise ValueError("zero variance in actuals")
    return 1.0 - float(np.sum((a - p) ** 2)) / tss


def pooled_predictions(
    K: KernelTensor,
    c_S: float,
    c_X: float,
    episodes: Sequence[NormalizedEpisode],
    horizon: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """所有 episode 的预测与实际值，按 episode 顺序拼接"""
    preds = [predict_returns(K, c_S, c_X, ep, horizon) for ep in episodes]
    actual = [realized_changes(ep, horizon) for ep in episodes]
    if not preds:
        raise ValueError("no episodes to evaluate")
    return np.concatenate(preds), np.concatenate(actual)


def horizon_r2(
    K: KernelTensor, c_S: float, c_X: float, episodes: Sequence[NormalizedEpisode], horizon: int
) -> float:
    return r_squared(*pooled_predictions(K, c_S, c_X, episodes, horizon))
