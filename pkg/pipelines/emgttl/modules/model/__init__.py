# -*- coding: utf-8 -*-
"""EMGTTL Transformer 模型。"""

from pipelines.emgttl.modules.model.config import (
    ARCHITECTURE_VARIANTS,
    ModelConfig,
    VariantShape,
    param_count,
    parameter_layout,
    variant_config,
)
from pipelines.emgttl.modules.model.emgttl_model import (
    HEAD_PREFIX,
    EMGTTLModel,
    init_weights,
    patchify,
    self_attention_head,
    sinusoidal_table,
    unpatchify,
)

__all__ = [
    "ModelConfig",
    "VariantShape",
    "ARCHITECTURE_VARIANTS",
    "variant_config",
    "parameter_layout",
    "param_count",
    "EMGTTLModel",
    "HEAD_PREFIX",
    "init_weights",
    "patchify",
    "unpatchify",
    "self_attention_head",
    "sinusoidal_table",
]
