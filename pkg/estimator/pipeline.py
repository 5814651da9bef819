"""
端到端估计：累加 → 岭回归 (RAW) → 锥投影 (PROJ)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.errors import EstimationError
from core.kernels import KernelTensor
from core.scheduler import TaskScheduler
from market.data import NormalizedEpisode
from projection.admm import ProjectionResult, ProjectionSettings, project

from .gram import (
    GramState, LambdaLike, RidgeEstimate, confidence_radius, gram_from_episodes, solve_ridge, w_norm,
    w_norm_error,
)

logger = logging.getLogger(__name__)


@dataclass
class EstimateSettings:
    """估计配置"""
    c_S: float = 1.0
    c_X: float = 1.0
    lam: LambdaLike = None
    project: bool = True
    self_only: bool = False
    R: Optional[float] = None
    delta: float = 0.05
    projection: ProjectionSettings = field(default_factory=ProjectionSettings)

    @classmethod
    def from_dict(
        cls, raw: Optional[Dict[str, Any]], projection: Optional[Dict[str, Any]] = None
    ) -> "EstimateSettings":
        data = raw or {}
        lam = data.get("lam")
        return cls(
            c_S=float(data.get("c_S", 1.0)),
            c_X=float(data.get("c_X", data.get("c_S", 1.0))),
            lam=np.asarray(lam, dtype=float) if isinstance(lam, list) else lam,
            project=bool(data.get("project", True)),
            self_only=bool(data.get("self_only", False)),
            R=data.get("R"),
            delta=float(data.get("delta", 0.05)),
            projection=ProjectionSettings.from_dict(projection),
        )


@dataclass
class EstimateResult:
    """RAW 与 PROJ 估计及其诊断"""
    raw: KernelTensor
    proj: Optional[ProjectionResult]
    c_S: float
    c_X: float
    n_episodes: int
    lam: Any
    log_det_W: float
    state: Optional[GramState] = None
    ridge: Optional[RidgeEstimate] = None
    radius: Optional[float] = None
    radius_reference: Optional[str] = None
    asset_states: List[GramState] = field(default_factory=list)  # self_only：每个资产的 d=1 状态

    @property
    def kernel(self) -> KernelTensor:
        return self.proj.G_proj if self.proj is not None else self.raw

    @property
    def converged(self) -> bool:
        return self.proj is None or self.proj.converged

    def sidecar(self, truth: Optional[KernelTensor] = None) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "lambda": self.lam,
            "n_episodes": self.n_episodes,
            "c_S": self.c_S,
            "c_X": self.c_X,
            "log_det_W": self.log_det_W,
        }
        if self.radius is not None:
            data["confidence_radius"] = self.radius
            data["confidence_reference"] = self.radius_reference
        if truth is not None and (self.state is not None or self.asset_states):
            data["w_norm_error"] = {"raw": self._error(self.raw, truth)}
            if self.proj is not None:
                data["w_norm_error"]["proj"] = self._error(self.proj.G_proj, truth)
        return data

    def _error(self, G: KernelTensor, truth: KernelTensor) -> Dict[str, float]:
        if self.state is not None:
            return w_norm_error(self.state, G, truth)
        return _self_only_error(self.asset_states, G, truth)


def _diagonal(G: KernelTensor, k: int) -> KernelTensor:
    return KernelTensor(G.values[:, k:k + 1, k:k + 1], bin_seconds=G.bin_seconds)


def _self_only_error(states: Sequence[GramState], G: KernelTensor, truth: KernelTensor) -> Dict[str, float]:
    """各资产 W_k-范数误差的平方和开方，只比较对角块"""
    absolute = ref = 0.0
    for k, state in enumerate(states):
        diff = _diagonal(G, k).values - _diagonal(truth, k).values
        absolute += w_norm(state, KernelTensor(diff)) ** 2
        ref += w_norm(state, _diagonal(truth, k)) ** 2
    absolute, ref = math.sqrt(absolute), math.sqrt(ref)
    return {"absolute": absolute, "relative": absolute / ref if ref > 0 else math.inf}


def _lambda_summary(lam: np.ndarray) -> Any:
    return float(lam.flat[0]) if np.all(lam == lam.flat[0]) else lam.tolist()


def estimate(
    episodes: Sequence[NormalizedEpisode],
    settings: Optional[EstimateSettings] = None,
    scheduler: Optional[TaskScheduler] = None,
    truth: Optional[KernelTensor] = None,
) -> EstimateResult:
    """从归一化 episode 估计 RAW，可选投影为 PROJ"""
    settings = settings or EstimateSettings()
    if not episodes:
        raise EstimationError("no episodes to estimate from")
    if settings.self_only and episodes[0].d > 1:
        return _estimate_self_only(episodes, settings, scheduler, truth)

    state = gram_from_episodes(episodes, settings.c_S, settings.c_X, settings.lam, scheduler)
    ridge = solve_ridge(state)
    first = episodes[0]
    raw = KernelTensor(ridge.G_raw.values, bin_seconds=first.bin_seconds, assets=first.assets,
                       metadata={"estimator": "raw"})
    proj = None
    if settings.project:
        proj = project(raw, state, settings.projection)

    radius = reference = None
    if settings.R is not None:
        if state.uniform_lambda:
            G_ref = truth if truth is not None else (proj.G_proj if proj is not None else raw)
            reference = "truth" if truth is not None else "estimate_surrogate"
            radius = confidence_radius(state, float(settings.R), settings.delta, G_ref, ridge)
        else:
            logger.warning("confidence radius skipped: regularization is not uniform across pairs")

    return EstimateResult(
        raw=raw, proj=proj, c_S=settings.c_S, c_X=settings.c_X, n_episodes=state.n_episodes,
        lam=_lambda_summary(ridge.lam), log_det_W=ridge.log_det_W, state=state, ridge=ridge,
        radius=radius, radius_reference=reference,
    )


def _estimate_self_only(
    episodes: Sequence[NormalizedEpisode],
    settings: EstimateSettings,
    scheduler: Optional[TaskScheduler],
    truth: Optional[KernelTensor] = None,
) -> EstimateResult:
    """每个资产单独做 d=1 拟合，拼成分块对角核

    给定 R 时每个资产以 δ/d 计算半径，合并为 √(Σ r_k²)，联合覆盖概率不低于 1 − δ。
    """
    first = episodes[0]
    M, d = first.M, first.d
    raw_values = np.zeros((M, d, d))
    proj_values = np.zeros((M, d, d))
    lams: List[float] = []
    log_det = 0.0
    iterations = 0
    residuals = [0.0, 0.0]
    objective = 0.0
    converged = True
    lam = settings.lam
    states: List[GramState] = []
    ridges: List[RidgeEstimate] = []
    for k in range(d):
        sub = [ep.select([k]) for ep in episodes]
        asset_lam = None
        if lam is not None:
            arr = np.asarray(lam, dtype=float)
            asset_lam = float(arr) if arr.ndim == 0 else float(arr[k, k])
        state = gram_from_episodes(sub, settings.c_S, settings.c_S, asset_lam, scheduler)
        ridge = solve_ridge(state)
        raw_values[:, k, k] = ridge.G_raw.values[:, 0, 0]
        states.append(state)
        ridges.append(ridge)
        lams.append(float(ridge.lam[0, 0]))
        log_det += ridge.log_det_W
        if settings.project:
            result = project(ridge.G_raw, state, settings.projection)
            proj_values[:, k, k] = result.G_proj.values[:, 0, 0]
            iterations = max(iterations, result.iterations)
            residuals = [max(residuals[0], result.primal_residual), max(residuals[1], result.dual_residual)]
            objective += result.objective
            converged = converged and result.converged

    raw = KernelTensor(raw_values, bin_seconds=first.bin_seconds, assets=first.assets,
                       metadata={"estimator": "raw", "self_only": True})
    proj = None
    if settings.project:
        proj = ProjectionResult(
            G_proj=raw.like(proj_values, estimator="proj"),
            iterations=iterations,
            primal_residual=residuals[0],
            dual_residual=residuals[1],
            objective=objective,
            converged=converged,
        )
    radius = reference = None
    if settings.R is not None:
        G_ref = truth if truth is not None else (proj.G_proj if proj is not None else raw)
        reference = "truth" if truth is not None else "estimate_surrogate"
        radius = math.sqrt(sum(
            confidence_radius(state, float(settings.R), settings.delta / d, _diagonal(G_ref, k), ridge) ** 2
            for k, (state, ridge) in enumerate(zip(states, ridges))
        ))
    return EstimateResult(
        raw=raw, proj=proj, c_S=settings.c_S, c_X=settings.c_X, n_episodes=len(episodes),
        lam=lams, log_det_W=log_det, radius=radius, radius_reference=reference, asset_states=states,
    )
