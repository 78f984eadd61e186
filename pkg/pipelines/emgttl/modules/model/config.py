# -*- coding: utf-8 -*-
"""
模型超参数与架构变体
"""

from typing import Dict, List, Literal, NamedTuple, Tuple

from pydantic import BaseModel, ConfigDict, PositiveInt, field_validator, model_validator

from pipelines.emgttl.errors import ConfigurationError


class ModelConfig(BaseModel):
    """
    EMGTTL 超参数

    Attributes:
        channels: 通道数 C（同时是 patch 边长）
        window: 窗口采样点数 W，须被 C 整除
        embed_dim: 嵌入维度 d，须被 num_heads 整除
        num_layers: 编码器层数 L
        num_heads: 注意力头数 h
        encoder_hidden: 编码器 MLP 隐层宽度
        head_hidden: 分类头两个隐层宽度
        num_classes: 类别数 K
        dropout_p: 嵌入后与编码器 MLP 内的 dropout 概率
        pos_embedding: learned（默认）或 sinusoidal（固定，不参与训练）
        encoder_mlp_depth: 编码器 MLP 隐层数（1 或 2）
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: PositiveInt
    window: PositiveInt
    embed_dim: PositiveInt
    num_layers: PositiveInt
    num_heads: PositiveInt
    encoder_hidden: PositiveInt
    head_hidden: Tuple[PositiveInt, PositiveInt] = (256, 64)
    num_classes: PositiveInt
    dropout_p: float = 0.1
    pos_embedding: Literal["learned", "sinusoidal"] = "learned"
    encoder_mlp_depth: Literal[1, 2] = 1

    @field_validator("dropout_p")
    @classmethod
    def validate_dropout(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {v}")
        return v

    @model_validator(mode="after")
    def validate_geometry(self) -> "ModelConfig":
        if self.window % self.channels:
            raise ValueError(
                f"W mod C must be 0: window {self.window} is not divisible by channels {self.channels}"
            )
        if self.embed_dim % self.num_heads:
            raise ValueError(
                f"d mod h must be 0: embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}"
            )
        return self

    @property
    def num_patches(self) -> int:
        return self.window // self.channels

    @property
    def patch_dim(self) -> int:
        return self.channels * self.channels

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def tokens(self) -> int:
        return self.num_patches + 1

    def replace(self, **changes) -> "ModelConfig":
        """返回修改后重新校验的新配置。"""
        return ModelConfig(**{**self.model_dump(), **changes})


class VariantShape(NamedTuple):
    embed_dim: int
    num_layers: int
    encoder_hidden: int
    num_heads: int


ARCHITECTURE_VARIANTS: Dict[int, VariantShape] = {
    1: VariantShape(64, 3, 256, 8),
    2: VariantShape(72, 4, 512, 12),
    3: VariantShape(128, 6, 256, 16),
    4: VariantShape(128, 6, 512, 32),
}


def variant_config(variant_id: int, *, channels: int, window: int, num_classes: int, **overrides) -> ModelConfig:
    """
    按变体编号构造 ModelConfig

    Raises:
        ConfigurationError: 未知变体编号
    """
    if variant_id not in ARCHITECTURE_VARIANTS:
        raise ConfigurationError(f"Unknown architecture variant {variant_id}, available: {sorted(ARCHITECTURE_VARIANTS)}")
    shape = ARCHITECTURE_VARIANTS[variant_id]
    fields = dict(shape._asdict(), channels=channels, window=window, num_classes=num_classes)
    fields.update(overrides)
    return ModelConfig(**fields)


def parameter_layout(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...], str]]:
    """
    所有参数的 (名称, 形状, 初始化方式)，顺序固定

    初始化方式：trunc（截断正态）、normal、zeros、ones、sinusoid
    """
    d, hidden = config.embed_dim, config.encoder_hidden
    pos_init = "sinusoid" if config.pos_embedding == "sinusoidal" else "normal"
    layout = [
        ("embed.E", (config.patch_dim, d), "trunc"),
        ("embed.x_cls", (d,), "normal"),
        ("embed.E_pos", (config.tokens, d), pos_init),
    ]
    for l in range(config.num_layers):
        prefix = f"encoder.{l}"
        layout += [
            (f"{prefix}.ln1.gain", (d,), "ones"),
            (f"{prefix}.ln1.bias", (d,), "zeros"),
            (f"{prefix}.attn.W_q", (d, d), "trunc"),
            (f"{prefix}.attn.W_k", (d, d), "trunc"),
            (f"{prefix}.attn.W_v", (d, d), "trunc"),
            (f"{prefix}.attn.W_msa", (config.num_heads * config.head_dim, d), "trunc"),
            (f"{prefix}.attn.b_msa", (d,), "zeros"),
            (f"{prefix}.ln2.gain", (d,), "ones"),
            (f"{prefix}.ln2.bias", (d,), "zeros"),
            (f"{prefix}.mlp.fc1.weight", (d, hidden), "trunc"),
            (f"{prefix}.mlp.fc1.bias", (hidden,), "zeros"),
        ]
        if config.encoder_mlp_depth == 2:
            layout += [
                (f"{prefix}.mlp.fc2.weight", (hidden, hidden), "trunc"),
                (f"{prefix}.mlp.fc2.bias", (hidden,), "zeros"),
            ]
        layout += [
            (f"{prefix}.mlp.out.weight", (hidden, d), "trunc"),
            (f"{prefix}.mlp.out.bias", (d,), "zeros"),
        ]
    h1, h2 = config.head_hidden
    layout += [
        ("norm.gain", (d,), "ones"),
        ("norm.bias", (d,), "zeros"),
        ("head.fc1.weight", (d, h1), "trunc"),
        ("head.fc1.bias", (h1,), "zeros"),
        ("head.fc2.weight", (h1, h2), "trunc"),
        ("head.fc2.bias", (h2,), "zeros"),
        ("head.out.weight", (h2, config.num_classes), "trunc"),
        ("head.out.bias", (config.num_classes,), "zeros"),
    ]
    return layout


def param_count(config: ModelConfig) -> int:
    """全部参数元素个数的闭式计数。"""
    d, hidden, heads_width = config.embed_dim, config.encoder_hidden, config.num_heads * config.head_dim
    h1, h2 = config.head_hidden
    embedding = config.patch_dim * d + d + config.tokens * d
    mlp = (d * hidden + hidden) + (hidden * d + d)
    if config.encoder_mlp_depth == 2:
        mlp += hidden * hidden + hidden
    layer = 2 * (2 * d) + 3 * d * d + (heads_width * d + d) + mlp
    head = 2 * d + (d * h1 + h1) + (h1 * h2 + h2) + (h2 * config.num_classes + config.num_classes)
    return embedding + config.num_layers * layer + head
