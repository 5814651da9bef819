"""
proplab 命令实现 - 每个子命令把配置交给对应模块并写出结果文件
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from config_loader import save_config
from core.cost import construct_manipulation
from core.errors import ConfigError, ConvergenceError, DataError, EstimationError
from core.kernels import ImpactFunction, KernelTensor, ParametricKernel, json_default
from core.scheduler import TaskScheduler
from core.settings import RunConfig
from core.types import ModelKind
from estimator import EstimateSettings, estimate
from evaluation import (
    ModelSpec, ParamGrid, RollingScheme, binning_robustness, concavity_sweep, default_registry,
    fit_parametric, kernel_shape_table, rolling_eval,
)
from market import (
    Dataset, NormalizationSettings, NormalizedEpisode, load_episodes, load_normalized, load_ticks,
    market_portfolio, normalize_dataset, select_assets, write_episodes, write_normalized, write_ticks,
)
from projection import ProjectionSettings
from proxy import (
    LABEL_COLUMN, ProxyConfig, build_proxy, min_size_scatter, peak_impact_fit, write_metaorders,
)
from simulator import SimConfig, TickSimConfig, simulate_dataset, simulate_ticks

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    """一次命令执行的上下文"""
    config: RunConfig
    console: Console
    scheduler: TaskScheduler
    output_dir: Path
    inputs: List[Path] = field(default_factory=list)
    outputs: List[Path] = field(default_factory=list)

    def output(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def input(self, raw: Optional[str], field_path: str) -> Path:
        if not raw:
            raise ConfigError("an input path is required", field_path)
        path = Path(raw)
        if not path.exists():
            raise ConfigError(f"input file not found: {path}", field_path)
        self.inputs.append(path)
        return path


# ---- 公共辅助 ----

def _write_json(path: Path, payload: Dict[str, Any]) -> None:
    text = json.dumps(payload, indent=2, default=json_default, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")


def _write_kernel(ctx: RunContext, K: KernelTensor, stem: str) -> None:
    K.to_json(ctx.output(f"{stem}.json"))
    K.to_csv(ctx.output(f"{stem}.csv"))


def _projection_settings(cfg: RunConfig) -> ProjectionSettings:
    return ProjectionSettings.from_dict(cfg.projection.model_dump())


def _c_X(c_S: float, c_X: Optional[float]) -> float:
    return c_S if c_X is None else c_X


def load_dataset(ctx: RunContext) -> Dataset:
    """读取价格 episode，按配置选资产、追加市场组合"""
    data = ctx.config.data
    dataset = load_episodes(
        ctx.input(data.episodes, "data.episodes"), data.schema_map, data.bin_seconds, data.M
    )
    if data.assets:
        dataset = select_assets(dataset, data.assets)
    if data.market_portfolio:
        dataset = market_portfolio(dataset)
    return dataset


def load_regression_episodes(ctx: RunContext) -> List[NormalizedEpisode]:
    """优先使用已归一化的输入，否则读取价格 episode 再归一化"""
    data = ctx.config.data
    if data.normalized:
        episodes = load_normalized(ctx.input(data.normalized, "data.normalized"), data.bin_seconds)
    elif data.episodes:
        settings = NormalizationSettings.from_dict(data.model_dump())
        episodes = normalize_dataset(load_dataset(ctx), settings)
    else:
        raise ConfigError("no input data: set data.episodes or data.normalized", "data")
    if not episodes:
        raise DataError("input contains no usable episodes")
    size = episodes[0].M * episodes[0].d ** 2
    if size > ctx.config.max_problem_size:
        raise EstimationError(
            f"problem size M*d^2 = {size} exceeds max_problem_size = {ctx.config.max_problem_size}"
        )
    return episodes


def file_digest(path: Path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def write_manifest(ctx: RunContext, command: str) -> Path:
    """解析后的配置 + 每个输入文件的 SHA-256"""
    path = ctx.output_dir / "manifest.yaml"
    save_config({
        "command": command,
        "config": ctx.config.model_dump(),
        "inputs": {str(p): file_digest(p) for p in ctx.inputs},
    }, path)
    return path


def _status(ctx: RunContext, message: str) -> None:
    ctx.console.print(f"[green]✓ {message}[/green]")


# ---- 子命令 ----

def cmd_simulate(ctx: RunContext) -> int:
    """模拟 episode（以及可选的逐笔成交流）"""
    section = ctx.config.simulate.model_dump()
    tick_section = section.pop("ticks")
    sim_cfg = SimConfig.from_dict({**section, "seed": ctx.config.seed})
    result = simulate_dataset(sim_cfg, scheduler=ctx.scheduler)
    write_episodes(result.dataset, ctx.output("episodes.csv"))
    write_normalized(result.normalized, ctx.output("normalized.csv"))
    _write_kernel(ctx, result.truth, "truth")
    _status(ctx, f"simulated {sim_cfg.N} episodes (M={sim_cfg.M}, d={sim_cfg.d})")

    if tick_section is not None:
        tick_cfg = TickSimConfig.from_dict({**tick_section, "seed": ctx.config.seed})
        ticks = simulate_ticks(tick_cfg)
        write_ticks(ticks, ctx.output("ticks.csv"))
        _status(ctx, f"simulated {len(ticks)} ticks")
    return 0


def _read_ids(path: Path) -> np.ndarray:
    frame = pd.read_csv(path)
    column = LABEL_COLUMN if LABEL_COLUMN in frame.columns else frame.columns[-1]
    return frame[column].to_numpy(np.int64)


def cmd_proxy(ctx: RunContext) -> int:
    """逐笔成交 → 合成母单 → TWAP episode → 峰值冲击拟合"""
    section = ctx.config.proxy
    ticks = load_ticks(ctx.input(ctx.config.data.ticks, "data.ticks"), ctx.config.data.schema_map)
    proxy_cfg = ProxyConfig(
        N_T=section.N_T,
        seed=ctx.config.seed,
        min_children=section.min_children,
        target_length=section.target_length,
        window=section.window,
        min_points=section.min_points,
        bin_seconds=ctx.config.data.bin_seconds,
        session_open_seconds=section.session_open_seconds,
        session_seconds=section.session_seconds,
    )
    labels = _read_ids(ctx.input(section.ids_file, "proxy.ids_file")) if section.ids_file else None
    run = build_proxy(ticks, proxy_cfg, labels)

    run.labeled.to_csv(ctx.output("ticks_labeled.csv"), index=False, lineterminator="\n")
    write_metaorders(run.metaorders, ctx.output("metaorders.csv"))
    if run.episodes.N:
        write_episodes(run.episodes, ctx.output("metaorder_episodes.csv"))
    scatter = min_size_scatter(run.metaorders, ticks, run.bars)
    scatter.to_csv(ctx.output("min_size.csv"), index=False, lineterminator="\n")
    _status(ctx, f"{len(run.metaorders)} metaorders from {len(ticks)} ticks")

    if section.fit:
        try:
            fit = peak_impact_fit(run.metaorders, run.bars, proxy_cfg.window, proxy_cfg.min_points)
        except (EstimationError, DataError) as e:
            ctx.console.print(f"[yellow]peak impact fit skipped: {e}[/yellow]")
        else:
            _write_json(ctx.output("peak_impact.json"), {**fit.to_dict(), "n_traders": run.n_traders})
            fit.points_frame().to_csv(ctx.output("peak_impact_points.csv"), index=False, lineterminator="\n")
            _status(ctx, f"delta_hat={fit.delta_hat:.4f}, Y_hat={fit.Y_hat:.4f} on {len(fit.points)} points")
    return 0


def cmd_estimate(ctx: RunContext) -> int:
    """RAW（岭回归）与 PROJ（锥投影）估计"""
    section = ctx.config.estimate
    episodes = load_regression_episodes(ctx)
    truth = KernelTensor.load(ctx.input(section.truth, "estimate.truth")) if section.truth else None
    lambdas: List[Any] = list(section.lambda_grid) if section.lambda_grid else [section.lam]

    not_converged = []
    for idx, lam in enumerate(lambdas):
        prefix = f"lambda_{idx}/" if section.lambda_grid else ""
        settings = EstimateSettings(
            c_S=section.c_S,
            c_X=_c_X(section.c_S, section.c_X),
            lam=np.asarray(lam, dtype=float) if isinstance(lam, list) else lam,
            project=section.project,
            self_only=section.self_only,
            R=section.R,
            delta=section.delta,
            projection=_projection_settings(ctx.config),
        )
        result = estimate(episodes, settings, ctx.scheduler, truth)
        _write_kernel(ctx, result.raw, f"{prefix}raw")
        sidecar = result.sidecar(truth)
        if result.proj is not None:
            _write_kernel(ctx, result.proj.G_proj, f"{prefix}proj")
            sidecar["projection"] = result.proj.report()
            if not result.proj.converged:
                not_converged.append(result.proj)
        _write_json(ctx.output(f"{prefix}sidecar.json"), sidecar)
        _status(ctx, f"estimated kernel (lambda={result.lam}) from {result.n_episodes} episodes")

    if not_converged:
        raise ConvergenceError("projection did not converge; best iterate written", not_converged[0])
    return 0


def _grid(section) -> ParamGrid:
    return ParamGrid.from_dict(section.grid.as_dict())


def cmd_fit(ctx: RunContext) -> int:
    """参数化核网格搜索"""
    section = ctx.config.fit
    episodes = load_regression_episodes(ctx)
    kind = ModelKind.parse(section.family)
    if not kind.is_parametric:
        raise ConfigError(f"{section.family} is not a parametric family", "fit.family")
    fit = fit_parametric(episodes, kind.family, _grid(section), section.c_S,
                         _c_X(section.c_S, section.c_X), section.self_only, ctx.scheduler)
    first = episodes[0]
    _write_kernel(ctx, fit.to_tensor(first.M, first.bin_seconds, first.assets), f"fit_{kind.value}")
    _write_json(ctx.output(f"fit_{kind.value}_params.json"), fit.params())
    _status(ctx, f"{kind.value}: shape {fit.shape}, train R2 {fit.train_r2:.4f}")
    return 0


def _model_specs(ctx: RunContext, names: List[str], c_S: float, c_X: float, grid: ParamGrid,
                 lam: Optional[float] = None) -> List[ModelSpec]:
    specs = []
    for name in names:
        try:
            kind = ModelKind.parse(name)
        except ValueError as e:
            raise ConfigError(str(e), "evaluate.models") from None
        specs.append(ModelSpec(kind, c_S, c_X, grid, lam, _projection_settings(ctx.config)))
    return specs


def _report_table(summary: List[Dict[str, Any]]) -> Table:
    table = Table(title="R2 by model and horizon")
    for column in ("model", "horizon", "IS_R2", "OOS_R2", "n_is", "n_oos"):
        table.add_column(column)
    for row in summary:
        oos = "-" if row["OOS_R2"] is None else f"{row['OOS_R2']:.4f}"
        table.add_row(row["model"], str(row["horizon"]), f"{row['IS_R2']:.4f}", oos,
                      str(row["n_is"]), str(row["n_oos"]))
    return table


def cmd_evaluate(ctx: RunContext) -> int:
    """滚动窗口 IS/OOS R²"""
    section = ctx.config.evaluate
    c_X = _c_X(section.c_S, section.c_X)
    specs = _model_specs(ctx, section.models, section.c_S, c_X, _grid(section), section.lam)
    scheme = RollingScheme(section.train_days, section.test_days, section.full_sample)
    episodes = load_regression_episodes(ctx)
    report = rolling_eval(episodes, specs, scheme, section.horizons, default_registry(), ctx.scheduler)
    report.to_csv(ctx.output("report.csv"))
    report.to_json(ctx.output("report_summary.json"))
    ctx.console.print(_report_table(report.summary()))

    if section.kernel_shapes:
        registry = default_registry()
        kernels = {spec.name: registry.fit(spec, episodes, ctx.scheduler).kernel for spec in specs}
        kernel_shape_table(kernels).to_csv(ctx.output("kernel_shapes.csv"), index=False, lineterminator="\n")
    if section.rebin_factors:
        robust = binning_robustness(load_dataset(ctx), section.rebin_factors, specs,
                                    section.horizons, scheme, None, ctx.scheduler)
        robust.to_csv(ctx.output("binning.csv"), index=False, lineterminator="\n")
    return 0


def cmd_sweep(ctx: RunContext) -> int:
    """R²(c) 曲线"""
    section = ctx.config.sweep
    try:
        kind = ModelKind.parse(section.model)
    except ValueError as e:
        raise ConfigError(str(e), "sweep.model") from None
    spec = ModelSpec(kind, section.c_S, section.c_X, _grid(ctx.config.evaluate),
                     ctx.config.evaluate.lam, _projection_settings(ctx.config))
    evaluate = ctx.config.evaluate
    scheme = RollingScheme(evaluate.train_days, evaluate.test_days) if section.rolling else None
    episodes = load_regression_episodes(ctx)
    result = concavity_sweep(episodes, spec, section.c_grid, section.fix, section.horizon,
                             scheme, None, ctx.scheduler)
    result.to_csv(ctx.output("sweep.csv"))
    table = Table(title=f"R2 sweep ({section.fix} fixed)")
    table.add_column("c")
    table.add_column("R2")
    table.add_column("normalized")
    for c, r2, norm in zip(result.c_grid, result.r2, result.normalized):
        table.add_row(f"{c:g}", f"{r2:.5f}", f"{norm:.3f}")
    ctx.console.print(table)
    _status(ctx, f"c_hat = {result.c_hat:g}")
    return 0


def _manipulation_kernel(K: KernelTensor):
    """d=1 且带参数描述时用连续参数核，否则按滞后插值"""
    if K.d != 1:
        raise DataError("manipulation construction needs a single-asset kernel")
    grid = K.metadata.get("parametric")
    if grid:
        return ParametricKernel.from_dict(grid[0][0])
    return K


def cmd_manipulate(ctx: RunContext) -> int:
    """构造负成本往返交易"""
    section = ctx.config.manipulate
    K = KernelTensor.load(ctx.input(section.kernel, "manipulate.kernel"))
    schedule = construct_manipulation(_manipulation_kernel(K), ImpactFunction(section.c),
                                      K.bin_seconds or section.bin_seconds, section.max_halvings)
    frame = pd.DataFrame({"time": schedule.times, "volume": schedule.volumes[:, 0]})
    frame.to_csv(ctx.output("schedule.csv"), index=False, lineterminator="\n")
    _write_json(ctx.output("schedule.json"), dict(schedule.metadata))
    ctx.console.print(f"cost = {schedule.metadata['cost']:.6g}")
    return 0


COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "simulate": cmd_simulate,
    "proxy": cmd_proxy,
    "estimate": cmd_estimate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "manipulate": cmd_manipulate,
}
