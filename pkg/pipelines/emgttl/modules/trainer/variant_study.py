# -*- coding: utf-8 -*-
"""
架构变体误差棒实验
对每个 (变体, 窗口几何) 在全部种子上训练并在测试集上评估，输出均值 ± 样本标准差。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveInt, ValidationError

from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.dataset import Segment, SegmentationConfig
from pipelines.emgttl.modules.model import ARCHITECTURE_VARIANTS, EMGTTLModel, ModelConfig, param_count
from pipelines.emgttl.modules.trainer.train_config import TrainConfig
from pipelines.emgttl.modules.trainer.trainer import evaluate, train

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("variant_id", "window_ms", "mean_accuracy", "std_accuracy", "param_count")

# 窗口几何 -> (训练片段, 测试片段)
SegmentProvider = Callable[[SegmentationConfig], Tuple[List[Segment], List[Segment]]]


class VariantEntry(BaseModel):
    """
    一个待比较的架构；只给 variant_id 时使用内置变体表中的 (d, L, hidden, h)
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    variant_id: int
    embed_dim: Optional[PositiveInt] = None
    num_layers: Optional[PositiveInt] = None
    encoder_hidden: Optional[PositiveInt] = None
    num_heads: Optional[PositiveInt] = None

    def shape_fields(self) -> Dict[str, int]:
        base = ARCHITECTURE_VARIANTS.get(self.variant_id)
        fields = dict(base._asdict()) if base is not None else {}
        for name in ("embed_dim", "num_layers", "encoder_hidden", "num_heads"):
            value = getattr(self, name)
            if value is not None:
                fields[name] = value
        missing = [n for n in ("embed_dim", "num_layers", "encoder_hidden", "num_heads") if n not in fields]
        if missing:
            raise ConfigurationError(f"Variant {self.variant_id} is not built in and lacks fields {missing}")
        return fields


@dataclass
class VariantStudyRow:
    variant_id: int
    window_ms: float
    mean_accuracy: float
    std_accuracy: float
    param_count: int
    accuracies: List[float] = field(default_factory=list)

    def to_row(self) -> Tuple:
        return (self.variant_id, self.window_ms, self.mean_accuracy, self.std_accuracy, self.param_count)


def _as_entry(variant: Union[int, VariantEntry, dict]) -> VariantEntry:
    if isinstance(variant, VariantEntry):
        return variant
    if isinstance(variant, int):
        return VariantEntry(variant_id=variant)
    return VariantEntry(**variant)


def variant_study(
    variants: Sequence[Union[int, VariantEntry, dict]],
    seeds: Sequence[int],
    segments_for: SegmentProvider,
    train_config: TrainConfig,
    *,
    windows: Sequence[SegmentationConfig],
    channels: int,
    sample_rate_hz: float,
    num_classes: int,
    model_overrides: Optional[Dict] = None,
    eval_batch_size: int = 256,
    workers: int = 1,
) -> List[VariantStudyRow]:
    """
    Args:
        variants: 变体编号或 VariantEntry，输出行顺序与之一致
        seeds: 至少 2 个种子
        segments_for: 按窗口几何返回 (训练片段, 测试片段)
        train_config: 训练超参数（seed 字段被逐个种子替换）
        windows: 窗口几何列表
        channels / sample_rate_hz / num_classes: 任务几何
        model_overrides: 其他 ModelConfig 字段（head_hidden、dropout_p 等）

    Returns:
        List[VariantStudyRow]: 变体优先、窗口其次排列

    Raises:
        ConfigurationError: 种子少于 2 个，或任一变体配置非法（在训练开始前检查）
    """
    if len(seeds) < 2:
        raise ConfigurationError(f"need ≥ 2 seeds for a variant study, got {len(seeds)}")
    if not windows:
        raise ConfigurationError("variant study needs at least one window geometry")

    plan: List[Tuple[int, SegmentationConfig, ModelConfig]] = []
    for variant in variants:
        entry = _as_entry(variant)
        for window in windows:
            samples, _ = window.resolve(sample_rate_hz, channels)
            try:
                config = ModelConfig(
                    **entry.shape_fields(),
                    channels=channels,
                    window=samples,
                    num_classes=num_classes,
                    **(model_overrides or {}),
                )
            except ValidationError as e:
                raise ConfigurationError(f"Invalid config for variant {entry.variant_id} at {window.window_ms} ms: {e}") from e
            plan.append((entry.variant_id, window, config))

    cache: Dict[Tuple[float, float], Tuple[List[Segment], List[Segment]]] = {}
    rows = []
    for variant_id, window, config in plan:
        key = (window.window_ms, window.step_ms)
        if key not in cache:
            cache[key] = segments_for(window)
        train_segments, test_segments = cache[key]
        if not test_segments:
            raise ConfigurationError(f"No test segments for window {window.window_ms} ms")

        accuracies = []
        for seed in seeds:
            model = EMGTTLModel.initialize(config, seed=seed)
            train(model, train_segments, (), train_config.replace(seed=seed), eval_batch_size=eval_batch_size, workers=workers)
            accuracies.append(evaluate(model, test_segments, eval_batch_size, workers).accuracy)

        row = VariantStudyRow(
            variant_id=variant_id,
            window_ms=window.window_ms,
            mean_accuracy=float(np.mean(accuracies)),
            std_accuracy=float(np.std(accuracies, ddof=1)),
            param_count=param_count(config),
            accuracies=accuracies,
        )
        logger.info(
            f"variant {variant_id} @ {window.window_ms:g} ms: {row.mean_accuracy:.4f} ± {row.std_accuracy:.4f} "
            f"({row.param_count} params, {len(seeds)} seeds)"
        )
        rows.append(row)
    return rows
