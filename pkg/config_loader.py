"""
配置加载器 - YAML 配置文件 + .env + PROPLAB_* 环境变量覆盖
"""
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv

from core.errors import ConfigError
from core.settings import RunConfig

ENV_PREFIX = "PROPLAB_"


def load_config(
    config_path: Optional[Union[str, Path]] = None,
    environ: Optional[Mapping[str, str]] = None,
    use_dotenv: bool = True,
) -> Dict[str, Any]:
    """默认值 ← 配置文件 ← 环境变量，返回普通字典"""
    config = get_default_config()

    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}", "config")
        with open(path, "r", encoding="utf-8") as f:
            try:
                user_config = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"invalid YAML: {e}", "config") from None
        if user_config:
            if not isinstance(user_config, dict):
                raise ConfigError("top level of the config file must be a mapping", "config")
            config = deep_merge(config, user_config)

    if use_dotenv and environ is None:
        load_dotenv()
    apply_env_overrides(config, os.environ if environ is None else environ)
    return config


def get_default_config() -> Dict[str, Any]:
    """获取默认配置"""
    return RunConfig().model_dump()


def _match_key(level: Dict[str, Any], part: str) -> str:
    """环境变量名不区分大小写（c_S 等键名带大写）"""
    for key in level:
        if key.lower() == part.lower():
            return key
    return part.lower()


def apply_env_overrides(config: Dict[str, Any], environ: Mapping[str, str]) -> List[str]:
    """PROPLAB_SECTION__KEY=value，值按 YAML 标量解析"""
    applied = []
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p for p in name[len(ENV_PREFIX):].split("__") if p]
        if not parts:
            continue
        level = config
        for part in parts[:-1]:
            key = _match_key(level, part)
            if not isinstance(level.get(key), dict):
                level[key] = {}
            level = level[key]
        level[_match_key(level, parts[-1])] = yaml.safe_load(raw) if raw != "" else None
        applied.append(name)
    return applied


def deep_merge(base: Dict, update: Dict) -> Dict:
    """深度合并两个字典"""
    result = base.copy()
    for key, value in update.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def save_config(config: Dict[str, Any], config_path: Union[str, Path] = "config.yaml") -> None:
    """保存配置到文件"""
    with open(config_path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
