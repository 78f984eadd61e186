# -*- coding: utf-8 -*-
"""
RunConfig 数据模型
train / finetune / eval / report / compare 共用的运行配置（JSON），未知字段一律拒绝
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, field_validator

from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.dataset import SegmentationConfig, SplitSpec, split_preset
from pipelines.emgttl.modules.model import ARCHITECTURE_VARIANTS, ModelConfig
from pipelines.emgttl.modules.trainer import TrainConfig

logger = logging.getLogger(__name__)

_SHAPE_FIELDS = ("embed_dim", "num_layers", "encoder_hidden", "num_heads")


class SplitSection(BaseModel):
    """显式给出的训练 / 测试试验编号。"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    train: List[int]
    test: List[int] = []


class DatasetSection(BaseModel):
    """
    Attributes:
        manifest: 数据集清单路径（相对路径以配置文件所在目录为基准）
        split: 预设名（db1-paper / db4-paper，别名 db1-style / db4-style）或显式 {train, test}
        segmentation: 窗口 / 步长（毫秒）
        eval_on: 评估使用 test（默认）或 train（过拟合检查）
        segment_cache_dir: 片段缓存目录，命中时跳过预处理与分段
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    manifest: str
    split: Union[str, SplitSection] = "db1-paper"
    segmentation: SegmentationConfig = SegmentationConfig()
    eval_on: Literal["test", "train"] = "test"
    segment_cache_dir: Optional[str] = None

    def split_spec(self, config: Optional[Dict[str, Any]] = None) -> SplitSpec:
        if isinstance(self.split, str):
            return split_preset(self.split, config)
        return SplitSpec(train_trial_ids=frozenset(self.split.train), test_trial_ids=frozenset(self.split.test))


class PreprocessSection(BaseModel):
    """chain 为 db1-style / db4-style 或自定义步骤列表；mu、db4_band 缺省时取 config.yaml 的 dsp 段。"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    chain: Union[Literal["db1-style", "db4-style"], List[Dict[str, Any]]] = "db1-style"
    mu: Optional[PositiveFloat] = None
    db4_band: Optional[Literal["bandstop", "bandpass"]] = None


class ModelSection(BaseModel):
    """
    模型段：variant 选择内置变体，显式字段覆盖变体；channels / window / num_classes 默认由数据集推导
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    variant: Optional[int] = None
    embed_dim: Optional[PositiveInt] = None
    num_layers: Optional[PositiveInt] = None
    encoder_hidden: Optional[PositiveInt] = None
    num_heads: Optional[PositiveInt] = None
    head_hidden: Tuple[PositiveInt, PositiveInt] = (256, 64)
    dropout_p: float = 0.1
    pos_embedding: Literal["learned", "sinusoidal"] = "learned"
    encoder_mlp_depth: Literal[1, 2] = 1
    channels: Optional[PositiveInt] = None
    window: Optional[PositiveInt] = None
    num_classes: Optional[PositiveInt] = None

    @field_validator("variant")
    @classmethod
    def validate_variant(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v not in ARCHITECTURE_VARIANTS:
            raise ValueError(f"unknown variant {v}, expected one of {sorted(ARCHITECTURE_VARIANTS)}")
        return v

    def shape_fields(self) -> Dict[str, int]:
        fields = dict(ARCHITECTURE_VARIANTS[self.variant]._asdict()) if self.variant is not None else {}
        for name in _SHAPE_FIELDS:
            if getattr(self, name) is not None:
                fields[name] = getattr(self, name)
        missing = [name for name in _SHAPE_FIELDS if name not in fields]
        if missing:
            raise ConfigurationError(f"model: missing {missing} (give a variant or all of {list(_SHAPE_FIELDS)})")
        return fields

    def extra_fields(self) -> Dict[str, Any]:
        """与架构尺寸无关的 ModelConfig 字段（variant_study 的 model_overrides）。"""
        return {
            "head_hidden": self.head_hidden,
            "dropout_p": self.dropout_p,
            "pos_embedding": self.pos_embedding,
            "encoder_mlp_depth": self.encoder_mlp_depth,
        }

    def resolve(self, channels: int, window: int, num_classes: int) -> ModelConfig:
        """
        Raises:
            ConfigurationError: 缺少尺寸字段
            pydantic.ValidationError: W mod C、d mod h 等不变量不成立
        """
        return ModelConfig(
            **self.shape_fields(),
            **self.extra_fields(),
            channels=self.channels or channels,
            window=self.window or window,
            num_classes=self.num_classes or num_classes,
        )


class TransferSection(BaseModel):
    """
    Attributes:
        source_checkpoint: 预训练 checkpoint（CLI --from 优先）
        mode: head-only-reinit | freeze-encoder
        lr_scale: 微调学习率 = 预训练学习率 × lr_scale
        learning_rate: 显式微调学习率，设置后忽略 lr_scale
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    source_checkpoint: Optional[str] = None
    mode: Literal["head-only-reinit", "freeze-encoder"] = "head-only-reinit"
    lr_scale: PositiveFloat = 1.0 / 3.0
    learning_rate: Optional[PositiveFloat] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dataset: DatasetSection
    preprocess: PreprocessSection = PreprocessSection()
    model: ModelSection = ModelSection(variant=1)
    train: TrainConfig
    transfer: TransferSection = TransferSection()

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)


# ==================== 加载与覆盖 ====================

def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    应用 `section.key=value` 覆盖（value 先按 JSON 解析，失败则作为字符串）

    Args:
        raw: 原始配置字典（不修改）
        overrides: 覆盖表达式列表，键路径可多级，如 train.learning_rate=0.001

    Returns:
        Dict[str, Any]: 覆盖后的新字典

    Raises:
        ConfigurationError: 表达式缺少 '=' 或键路径为空
    """
    result = json.loads(json.dumps(raw))
    for item in overrides:
        key, sep, value = item.partition("=")
        path = [part for part in key.strip().split(".") if part]
        if not sep or not path:
            raise ConfigurationError(f"Invalid --set '{item}', expected section.key=value")
        node = result
        for part in path[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = node[part] = {}
            node = child
        node[path[-1]] = _parse_value(value)
        logger.debug(f"Override {'.'.join(path)} = {node[path[-1]]!r}")
    return result


def _resolve_relative(raw: Dict[str, Any], base_dir: Path) -> None:
    for section, key in (("dataset", "manifest"), ("dataset", "segment_cache_dir"), ("transfer", "source_checkpoint")):
        value = (raw.get(section) or {}).get(key)
        if isinstance(value, str) and value and not Path(value).is_absolute():
            raw[section][key] = str(base_dir / value)


def load_run_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> RunConfig:
    """
    读取 JSON RunConfig 并应用覆盖

    Raises:
        ConfigurationError: 文件不存在或不是合法 JSON 对象
        pydantic.ValidationError: 字段非法或存在未知字段
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"Run config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Run config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Run config {path} must be a JSON object")

    _resolve_relative(raw, path.resolve().parent)
    return RunConfig.model_validate(apply_overrides(raw, overrides))
