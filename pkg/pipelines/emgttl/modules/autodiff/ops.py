# -*- coding: utf-8 -*-
"""
可微算子
每个算子计算前向结果并返回对应的反向函数（grad_out -> 各输入梯度）。

广播规则：仅允许前导批维度广播（较小张量的形状必须等于较大张量的尾部形状），
其他情况必须显式 reshape。
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from pipelines.emgttl.errors import ConfigurationError, DataError, ShapeError
from pipelines.emgttl.modules.autodiff.tensor import Tensor, make_result

Operand = Union[Tensor, float, int]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _lift(value: Operand, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _check_trailing(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    small, large = (a, b) if a.ndim < b.ndim else (b, a)
    if small.ndim == large.ndim or large.shape[large.ndim - small.ndim:] != small.shape:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape} (only leading-dim broadcasting is allowed)")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if len(shape) == 0:
        return np.asarray(grad.sum(), dtype=grad.dtype)
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


# ==================== 逐元素运算 ====================

def add(a: Operand, b: Operand) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_trailing(a, b, "add")

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result("add", a.data + b.data, (a, b), backward_fn)


def sub(a: Operand, b: Operand) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_trailing(a, b, "sub")

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result("sub", a.data - b.data, (a, b), backward_fn)


def mul(a: Operand, b: Operand) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)
    _check_trailing(a, b, "mul")

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result("mul", a.data * b.data, (a, b), backward_fn)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward_fn(g):
        return (g * c,)

    return make_result("scale", x.data * x.dtype.type(c), (x,), backward_fn)


def gelu(x: Tensor) -> Tensor:
    """精确 GELU：x·Φ(x)，Φ 为标准正态 CDF（非 tanh 近似）。"""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)

    def backward_fn(g):
        return (g * (cdf + x.data * pdf),)

    return make_result("gelu", (x.data * cdf).astype(x.dtype), (x,), backward_fn)


def dropout(x: Tensor, p: float, training: bool, seed: Union[int, np.random.Generator, None] = None) -> Tensor:
    """
    反向缩放 dropout

    Args:
        x: 输入
        p: 置零概率，0 <= p < 1
        training: False 时为恒等映射
        seed: 整数种子或 numpy Generator（确定性）

    Raises:
        ConfigurationError: p 超出 [0, 1)
    """
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))

    def backward_fn(g):
        return (g * keep,)

    return make_result("dropout", x.data * keep, (x,), backward_fn)


# ==================== 归约与线性代数 ====================

def sum_(x: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make_result("sum", np.asarray(data, dtype=x.dtype), (x,), backward_fn)


def mean(x: Tensor, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> Tensor:
    total = sum_(x, axis=axis, keepdims=keepdims)
    count = x.size // max(total.size, 1) if axis is not None else x.size
    return scale(total, 1.0 / count)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    矩阵乘法 a[..., m, k] @ b[k, n] 或 a[..., m, k] @ b[..., k, n]（前导维一致）。

    Raises:
        ShapeError: 内维或批维不一致
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ between {a.shape} and {b.shape}")

    def backward_fn(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            k, n = b.shape
            grad_b = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return grad_a, grad_b

    return make_result("matmul", np.matmul(a.data, b.data), (a, b), backward_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ W (+ b)"""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """数值稳定 softmax（先减最大值）。"""
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return make_result("softmax", y, (x,), backward_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    尾维 LayerNorm：(x - mean) / sqrt(var + eps) * gain + bias

    Raises:
        ShapeError: gain/bias 形状与尾维不符
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match trailing dim of {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std

    def backward_fn(g):
        lead = tuple(range(g.ndim - 1))
        grad_gain = np.sum(g * x_hat, axis=lead)
        grad_bias = np.sum(g, axis=lead)
        dx_hat = g * gain.data
        grad_x = inv_std / d * (
            d * dx_hat
            - dx_hat.sum(axis=-1, keepdims=True)
            - x_hat * (dx_hat * x_hat).sum(axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias

    out = x_hat * gain.data + bias.data
    return make_result("layer_norm", out.astype(x.dtype), (x, gain, bias), backward_fn)


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """
    批均值交叉熵（融合 log-sum-exp）

    Args:
        logits: [B, K]
        labels: 长度 B 的类别索引

    Raises:
        DataError: 标签越界
        ShapeError: logits 不是二维或与标签数量不符
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    batch, num_classes = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"cross_entropy: labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")

    x = logits.data
    x_max = x.max(axis=1, keepdims=True)
    shifted = x - x_max
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(batch)
    loss = np.mean(lse[:, 0] - shifted[rows, labels])

    def backward_fn(g):
        probs = np.exp(shifted - lse)
        probs[rows, labels] -= 1.0
        return (probs * (g / batch),)

    return make_result("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)


# ==================== 结构算子 ====================

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or t.shape[:axis] + t.shape[axis + 1:] != tensors[0].shape[:axis] + tensors[0].shape[axis + 1:]:
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward_fn)


def slice_(x: Tensor, key) -> Tensor:
    """基本切片（整数 / slice / Ellipsis），结果为拷贝。"""
    data = np.array(x.data[key], copy=True)

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[key] += g
        return (full,)

    return make_result("slice", data, (x,), backward_fn)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from exc

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return make_result("reshape", data, (x,), backward_fn)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: invalid axes {axes} for shape {x.shape}")
    inverse = tuple(np.argsort([a % x.ndim for a in axes]))

    def backward_fn(g):
        return (np.transpose(g, inverse),)

    return make_result("transpose", np.ascontiguousarray(np.transpose(x.data, axes)), (x,), backward_fn)


def expand(x: Tensor, leading: Sequence[int]) -> Tensor:
    """沿新增前导维复制 x：形状 (*leading, *x.shape)。"""
    leading = tuple(leading)
    data = np.broadcast_to(x.data, leading + x.shape).copy()

    def backward_fn(g):
        return (g.sum(axis=tuple(range(len(leading)))),)

    return make_result("expand", data, (x,), backward_fn)


def add_embedding(z: Tensor, table: Tensor) -> Tensor:
    """
    逐行嵌入相加：table[(T, d)] 加到 z[..., T, d] 的每条序列上（位置嵌入）。

    Raises:
        ShapeError: table 形状与 z 的尾部两维不符
    """
    if table.ndim != 2 or z.shape[-2:] != table.shape:
        raise ShapeError(f"add_embedding: table {table.shape} does not match token grid of {z.shape}")
    return add(z, table)
