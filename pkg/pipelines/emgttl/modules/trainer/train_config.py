# -*- coding: utf-8 -*-
"""
训练超参数
"""

from typing import Literal, Tuple

from pydantic import BaseModel, ConfigDict, NonNegativeFloat, NonNegativeInt, PositiveFloat, PositiveInt, field_validator

_PRECISION_ALIASES = {"32": "32", "64": "64", "float32": "32", "float64": "64", "32-bit": "32", "64-bit": "64"}


class TrainConfig(BaseModel):
    """
    Attributes:
        learning_rate: 必填，不提供默认值
        betas: Adam (β₁, β₂)，均在 [0, 1)
        weight_decay: 解耦权重衰减系数
        batch_size: 批大小
        epochs: 固定 epoch 预算（无早停）
        seed: 打乱与 dropout 的根种子
        precision: "32"（训练）或 "64"（校验）
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: PositiveFloat
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: NonNegativeFloat = 0.00055
    batch_size: PositiveInt = 512
    epochs: PositiveInt = 1
    seed: NonNegativeInt = 0
    precision: Literal["32", "64"] = "32"

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        for beta in v:
            if not 0.0 <= beta < 1.0:
                raise ValueError(f"betas must lie in [0, 1), got {v}")
        return v

    @field_validator("precision", mode="before")
    @classmethod
    def normalize_precision(cls, v):
        key = str(v).lower()
        if key not in _PRECISION_ALIASES:
            raise ValueError(f"precision must be 32 or 64, got {v!r}")
        return _PRECISION_ALIASES[key]

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**self.model_dump(), **changes})
