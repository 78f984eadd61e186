# -*- coding: utf-8 -*-
"""
全局配置加载
读取 config.yaml，叠加 .env 与环境变量覆盖
"""

import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent / "config.yaml"


@lru_cache(maxsize=None)
def load_config() -> Dict[str, Any]:
    """
    加载配置文件，支持环境变量覆盖

    环境变量优先级高于配置文件：
    - EMGTTL_CONFIG: 替代的 YAML 路径
    - EMGTTL_THREADS: 并行评估/预处理的最大 worker 数（默认 1，完全确定性）
    - EMGTTL_LOG_LEVEL: 日志级别

    Returns:
        Dict[str, Any]: 配置字典（进程内缓存，调用方不要原地修改）

    Raises:
        FileNotFoundError: 配置文件不存在
        ValueError: 配置文件为空或覆盖值非法
    """
    load_dotenv()

    config_path = Path(os.environ.get("EMGTTL_CONFIG", DEFAULT_CONFIG_PATH))
    if not config_path.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_path, "r", encoding="utf-8") as f:
        config = yaml.safe_load(f)

    if not config:
        raise ValueError("Configuration file is empty")

    runtime = config.setdefault("runtime", {})
    if "EMGTTL_THREADS" in os.environ:
        threads = int(os.environ["EMGTTL_THREADS"])
        if threads < 1:
            raise ValueError(f"EMGTTL_THREADS must be >= 1, got {threads}")
        runtime["threads"] = threads
    runtime.setdefault("threads", 1)

    if "EMGTTL_LOG_LEVEL" in os.environ:
        config.setdefault("logging", {})["level"] = os.environ["EMGTTL_LOG_LEVEL"].upper()

    logger.debug(f"Configuration loaded from {config_path}")
    return config