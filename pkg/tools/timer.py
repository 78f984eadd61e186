# -*- coding: utf-8 -*-
"""
阶段计时器 - 统计预处理 / 前向 / 反向 / 优化器 / 评估各阶段耗时

Usage:
    from tools.timer import timer

    with timer.record("trainer.forward"):
        logits = model.forward(X, training=True, seed=step_seed)

    logger.debug(timer.get_report_string())
"""

import logging
import time
from collections import OrderedDict
from contextlib import contextmanager
from typing import Dict, Optional, Tuple

logger = logging.getLogger(__name__)


class Timer:
    """
    阶段计时器 - 单例模式

    Attributes:
        _stats (Dict[str, Tuple[float, int]]): 阶段名 -> (累计耗时秒, 次数)
            阶段名约定为 "module.stage"，如 "trainer.backward"、"dsp.chain"
    """

    _instance: Optional["Timer"] = None

    _STAGE_LABELS = {
        "chain": "Preprocess",
        "forward": "Forward",
        "backward": "Backward",
        "optimizer": "Adam step",
        "eval": "Evaluation",
        "epoch": "Epoch",
    }

    def __new__(cls) -> "Timer":
        """单例模式"""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._enabled: bool = True
        self._stats: Dict[str, Tuple[float, int]] = OrderedDict()
        self._console_output: bool = False
        self._initialized = True

    def enable(self) -> None:
        self._enabled = True

    def disable(self) -> None:
        self._enabled = False

    def is_enabled(self) -> bool:
        return self._enabled

    @property
    def console_output(self) -> bool:
        return self._console_output

    def reset(self) -> None:
        """清空累计数据，在每次训练开始时调用。"""
        self._stats = OrderedDict()

    @contextmanager
    def record(self, name: str):
        """
        上下文管理器，累计代码块耗时到阶段 name。

        Args:
            name: 阶段名，格式 "module.stage"
        """
        if not self._enabled:
            yield
            return

        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            total, count = self._stats.get(name, (0.0, 0))
            self._stats[name] = (total + elapsed, count + 1)

    def get_total(self, name: str) -> float:
        """获取阶段累计耗时（秒）"""
        return self._stats.get(name, (0.0, 0))[0]

    def get_count(self, name: str) -> int:
        return self._stats.get(name, (0.0, 0))[1]

    def get_report_string(self) -> str:
        """
        生成按模块分组的耗时报告。

        Returns:
            str: 每个阶段一行：累计耗时、次数、平均耗时
        """
        if not self._enabled:
            return "Timer is disabled."
        if not self._stats:
            return "No timing data recorded."

        lines = ["=" * 48, "       Timer Report", "=" * 48]
        grouped: Dict[str, Dict[str, Tuple[float, int]]] = OrderedDict()
        for name, value in self._stats.items():
            module, _, stage = name.partition(".")
            if not stage:
                module, stage = "Other", name
            grouped.setdefault(module, OrderedDict())[stage] = value

        for module, stages in grouped.items():
            lines.append(f"\n[{module}]")
            for stage, (total, count) in stages.items():
                label = self._STAGE_LABELS.get(stage, stage.capitalize())
                lines.append(f"  {label:<14}: {total:9.4f}s  x{count:<6d} avg {total / count:.5f}s")
        lines.append("=" * 48)
        return "\n".join(lines)

    def save_report(self, filepath: str) -> None:
        """将报告写入文件（覆盖模式）"""
        if not self._enabled:
            logger.warning("Timer is disabled, skip saving report.")
            return
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(self.get_report_string())
        logger.info(f"Timer report saved to: {filepath}")


# 模块级单例导出
timer = Timer()


def configure_from_config(config: dict) -> None:
    """
    从配置字典加载 Timer 设置

    Args:
        config: 配置字典，读取其中的 'timer' 段
    """
    timer_config = config.get("timer", {})
    if not isinstance(timer_config, dict):
        logger.warning("Invalid timer config, using defaults")
        return

    if timer_config.get("enabled", True):
        timer.enable()
    else:
        timer.disable()
    timer._console_output = timer_config.get("console_output", False)
    logger.debug(f"Timer configured: enabled={timer.is_enabled()}")
