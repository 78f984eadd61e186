# -*- coding: utf-8 -*-
"""
Adam（解耦权重衰减）

    m ← β₁·m + (1-β₁)·g
    v ← β₂·v + (1-β₂)·g²
    p ← p·(1 - lr·λ) - lr·m̂ / (√v̂ + ε)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from pipelines.emgttl.errors import ShapeError, TrainingError
from pipelines.emgttl.modules.autodiff import Parameter
from pipelines.emgttl.modules.trainer.train_config import TrainConfig

logger = logging.getLogger(__name__)

ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """每个参数的一阶 / 二阶矩（零初始化）与步数 t。"""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Sequence[Parameter],
    grads: Optional[Mapping[str, np.ndarray]],
    state: AdamState,
    cfg: TrainConfig,
    lr: Optional[float] = None,
) -> AdamState:
    """
    原地更新参数与优化器状态

    Args:
        params: 待更新参数，trainable=False 的跳过
        grads: 参数名 -> 梯度；None 或缺失时使用 param.grad
        state: 优化器状态（原地修改）
        cfg: 提供 betas / weight_decay / learning_rate
        lr: 覆盖 cfg.learning_rate

    Returns:
        AdamState: 同一个 state 对象

    Raises:
        TrainingError: 梯度含 NaN/Inf（附参数名与步数）
        ShapeError: 梯度形状与参数不符
    """
    lr = cfg.learning_rate if lr is None else lr
    beta1, beta2 = cfg.betas
    grads = grads or {}
    step = state.t + 1

    active = [p for p in params if p.trainable]
    for p in active:
        g = grads.get(p.name, p.grad)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ShapeError(f"Gradient for '{p.name}' has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"Non-finite gradient for parameter '{p.name}' at step {step}", parameter=p.name, step=step)

    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    for p in active:
        g = grads.get(p.name, p.grad)
        g = np.zeros_like(p.data) if g is None else g.astype(p.dtype, copy=False)
        m = state.m.get(p.name)
        v = state.v.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        p.data = (p.data * (1.0 - lr * cfg.weight_decay) - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)).astype(p.dtype, copy=False)
        state.m[p.name] = m.astype(p.dtype, copy=False)
        state.v[p.name] = v.astype(p.dtype, copy=False)

    state.t = step
    return state
