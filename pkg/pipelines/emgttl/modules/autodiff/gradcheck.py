# -*- coding: utf-8 -*-
"""
有限差分梯度检验
中心差分，步长 1e-5·max(1, |x|)，相对误差按张量无穷范数计算。
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from pipelines.emgttl.modules.autodiff.tensor import Parameter, Tape, Tensor, backward

logger = logging.getLogger(__name__)

_DENOM_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    """单个输入张量的梯度检验结果。"""

    name: str
    max_rel_error: float
    passed: bool


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, step: float = 1e-5) -> np.ndarray:
    """
    对 tensor 的每个元素做中心差分。fn 必须在每次调用时基于 tensor.data 重新构图。
    """
    grad = np.zeros(tensor.shape, dtype=np.float64)
    tensor.data = np.ascontiguousarray(tensor.data)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        h = step * max(1.0, abs(float(original)))
        flat[i] = original + h
        f_plus = fn().item()
        flat[i] = original - h
        f_minus = fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), _DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / denom


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    *,
    step: float = 1e-5,
    tol: float = 1e-4,
) -> List[GradCheckResult]:
    """
    比较解析梯度与中心差分梯度。

    Args:
        fn: 无参闭包，返回标量 Tensor（内部使用 inputs 构图）
        inputs: 需要检验的张量（requires_grad=True），应为 float64
        step: 相对步长
        tol: 最大允许相对误差

    Returns:
        List[GradCheckResult]: 每个输入一条结果
    """
    for t in inputs:
        if t.dtype != np.float64:
            logger.warning(f"gradcheck on {t.dtype} input '{t.name}': finite differences are unreliable below 64-bit")
        t.grad = np.zeros_like(t.data) if isinstance(t, Parameter) else None

    with Tape():
        loss = fn()
    backward(loss)

    results = []
    for index, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(fn, t, step=step)
        err = relative_error(analytic.astype(np.float64), numeric)
        name = t.name or f"input[{index}]"
        results.append(GradCheckResult(name=name, max_rel_error=err, passed=err < tol))
        logger.debug(f"gradcheck {name}: max rel err {err:.3e}")
    return results
