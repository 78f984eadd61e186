# -*- coding: utf-8 -*-
"""
反向模式自动微分引擎（numpy 实现）
"""

from pipelines.emgttl.modules.autodiff.tensor import (
    Parameter,
    Tape,
    Tensor,
    active_tape,
    backward,
    get_default_dtype,
    precision,
    resolve_precision,
    set_debug,
    set_default_dtype,
)
from pipelines.emgttl.modules.autodiff.ops import (
    add,
    add_embedding,
    concat,
    cross_entropy,
    dropout,
    expand,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    reshape,
    scale,
    slice_,
    softmax,
    sub,
    sum_,
    transpose,
)
from pipelines.emgttl.modules.autodiff.gradcheck import GradCheckResult, gradcheck, numerical_gradient

__all__ = [
    "Parameter", "Tape", "Tensor", "active_tape", "backward", "get_default_dtype", "precision",
    "resolve_precision", "set_debug", "set_default_dtype",
    "add", "add_embedding", "concat", "cross_entropy", "dropout", "expand", "gelu", "layer_norm",
    "linear", "matmul", "mean", "mul", "reshape", "scale", "slice_", "softmax", "sub", "sum_", "transpose",
    "GradCheckResult", "gradcheck", "numerical_gradient",
]
