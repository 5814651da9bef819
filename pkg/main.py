"""
proplab 主入口 - 命令行参数、配置解析与退出码
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# 添加当前目录到路径
sys.path.insert(0, str(Path(__file__).parent))

from rich.console import Console
from rich.logging import RichHandler

from cli import COMMANDS, RunContext, write_manifest
from config_loader import load_config
from core.errors import ConfigError, ProplabError
from core.scheduler import TaskScheduler
from core.settings import validate_config

logger = logging.getLogger("proplab")


def _csv_list(cast):
    def parse(raw: str) -> List[Any]:
        return [cast(item) for item in raw.split(",") if item.strip()]
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proplab", description="Concave multi-asset propagator toolkit")
    parser.add_argument("-c", "--config", default=None, help="Config file path (YAML)")
    parser.add_argument("--seed", type=int, default=None, help="Global random seed")
    parser.add_argument("--threads", type=int, default=None, help="Maximum worker threads")
    parser.add_argument("-o", "--output", default=None, help="Output directory")
    parser.add_argument("--manifest", action="store_true", help="Write resolved config and input hashes")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="Generate synthetic episodes with a known kernel")

    proxy = sub.add_parser("proxy", help="Build synthetic metaorders from a tick stream")
    proxy.add_argument("--ticks", help="Tick CSV")
    proxy.add_argument("--ids-file", help="CSV with one trader id per tick")
    proxy.add_argument("--n-traders", type=int, help="Number of synthetic trader ids per asset")
    proxy.add_argument("--window", choices=["bin", "tick"], help="Peak impact measurement window")

    est = sub.add_parser("estimate", help="RAW ridge estimate and PROJ projection")
    est.add_argument("--data", help="Episode CSV")
    est.add_argument("--normalized", help="Normalized episode CSV")
    est.add_argument("--truth", help="True kernel file for W-norm errors")
    est.add_argument("--no-project", action="store_true", help="Skip the shape projection")
    est.add_argument("--lambda-grid", type=_csv_list(float), help="Comma separated ridge values")

    fit = sub.add_parser("fit", help="Parametric kernel grid search")
    fit.add_argument("--data", help="Episode CSV")
    fit.add_argument("--normalized", help="Normalized episode CSV")
    fit.add_argument("--family", help="1exp, 2exp or power")

    ev = sub.add_parser("evaluate", help="Rolling in-sample / out-of-sample R2")
    ev.add_argument("--data", help="Episode CSV")
    ev.add_argument("--normalized", help="Normalized episode CSV")
    ev.add_argument("--models", type=_csv_list(str), help="Comma separated model kinds")
    ev.add_argument("--horizons", type=_csv_list(int), help="Comma separated horizons in bins")

    sweep = sub.add_parser("sweep", help="R2 as a function of the concavity exponent")
    sweep.add_argument("--data", help="Episode CSV")
    sweep.add_argument("--normalized", help="Normalized episode CSV")
    sweep.add_argument("--c-grid", type=_csv_list(float), help="Comma separated exponents")
    sweep.add_argument("--fix", choices=["c_S", "c_X", "both"], help="Exponent held fixed")

    man = sub.add_parser("manipulate", help="Construct a negative-cost round trip")
    man.add_argument("--kernel", help="Kernel JSON or CSV")
    man.add_argument("--c", type=float, help="Concavity exponent")
    return parser


# 命令行参数 → 配置中的点路径
OVERRIDES = {
    "seed": "seed",
    "threads": "threads",
    "output": "output_dir",
    "ticks": "data.ticks",
    "ids_file": "proxy.ids_file",
    "n_traders": "proxy.N_T",
    "window": "proxy.window",
    "data": "data.episodes",
    "normalized": "data.normalized",
    "truth": "estimate.truth",
    "lambda_grid": "estimate.lambda_grid",
    "family": "fit.family",
    "models": "evaluate.models",
    "horizons": "evaluate.horizons",
    "c_grid": "sweep.c_grid",
    "fix": "sweep.fix",
    "kernel": "manipulate.kernel",
    "c": "manipulate.c",
}


def apply_cli_overrides(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """命令行参数优先于配置文件和环境变量"""
    for attr, dotted in OVERRIDES.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        level = config
        *parents, key = dotted.split(".")
        for part in parents:
            level = level.setdefault(part, {})
        level[key] = value
    if getattr(args, "no_project", False):
        config.setdefault("estimate", {})["project"] = False
    return config


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=verbose, show_path=verbose)],
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """主入口，返回退出码"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    console = Console()

    try:
        raw = apply_cli_overrides(load_config(args.config), args)
        config = validate_config(raw)
    except ConfigError as e:
        console.print(f"[red]✗ config error: {e}[/red]")
        return e.exit_code

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config, console, TaskScheduler(config.threads), output_dir)
    logger.debug(f"running {args.command} with seed {config.seed}, {ctx.scheduler.max_workers} workers")

    try:
        code = COMMANDS[args.command](ctx)
    except ProplabError as e:
        console.print(f"[red]✗ {type(e).__name__}: {e}[/red]")
        code = e.exit_code
    except (ValueError, OSError) as e:
        logger.debug("runtime failure", exc_info=True)
        console.print(f"[red]✗ {e}[/red]")
        code = 3
    if args.manifest:
        write_manifest(ctx, args.command)
    return code


if __name__ == "__main__":
    sys.exit(main())
