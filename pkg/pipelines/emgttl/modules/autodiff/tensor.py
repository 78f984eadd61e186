# -*- coding: utf-8 -*-
"""
Tensor / Tape / Parameter
基于 numpy 的稠密张量与反向模式自动微分记录带。

约定：
    - 只有在 `with Tape():` 作用域内、且输入中存在 requires_grad 张量时，算子才会被记录；
      作用域外的张量是不可变的值，可在线程间只读共享。
    - Tape 为单一所有者：记录与 backward 在同一线程完成（记录带栈是 thread-local 的）。
    - 梯度以 += 语义累加，训练步之间需显式清零（Parameter.zero_grad）。
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from pipelines.emgttl.errors import ConfigurationError, DataError, UsageError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_PRECISIONS = {
    "float32": np.float32,
    "float64": np.float64,
    "32": np.float32,
    "64": np.float64,
}

_settings = {"dtype": np.float32, "debug": False}
_local = threading.local()


def resolve_precision(precision: Union[str, type, np.dtype]) -> type:
    """将 "32"/"64"/"float32"/"float64"/dtype 统一转换为 numpy 标量类型。"""
    if isinstance(precision, str):
        if precision not in _PRECISIONS:
            raise ConfigurationError(f"Unknown precision '{precision}', expected one of {sorted(_PRECISIONS)}")
        return _PRECISIONS[precision]
    dtype = np.dtype(precision).type
    if dtype not in (np.float32, np.float64):
        raise ConfigurationError(f"Unsupported precision dtype: {precision}")
    return dtype


def get_default_dtype() -> type:
    return _settings["dtype"]


def set_default_dtype(precision: Union[str, type]) -> None:
    _settings["dtype"] = resolve_precision(precision)


@contextmanager
def precision(p: Union[str, type]):
    """
    临时切换计算精度。

    Usage:
        with precision("float64"):
            ...  # 梯度检验
    """
    previous = _settings["dtype"]
    _settings["dtype"] = resolve_precision(p)
    try:
        yield
    finally:
        _settings["dtype"] = previous


def set_debug(enabled: bool) -> None:
    """开启后每个算子输出都会做有限性检查。"""
    _settings["debug"] = bool(enabled)


def _tape_stack() -> List["Tape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """n 维实数张量，可参与反向模式自动微分。"""

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        self.data = np.asarray(data, dtype=dtype or get_default_dtype())
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._node: Optional["TapeNode"] = None
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # 运算符重载，实际实现位于 ops.py
    def __add__(self, other):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from pipelines.emgttl.modules.autodiff import ops
        if isinstance(other, Tensor):
            raise UsageError("Tensor / Tensor is not supported; divide by a Python scalar")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.slice_(self, key)

    def reshape(self, *shape):
        from pipelines.emgttl.modules.autodiff import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from pipelines.emgttl.modules.autodiff import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        from pipelines.emgttl.modules.autodiff import ops
        return ops.sum_(self, axis=axis, keepdims=keepdims)

    def backward(self) -> Dict[str, np.ndarray]:
        return backward(self)


class Parameter(Tensor):
    """
    可学习参数

    Attributes:
        name: 模型内唯一的参数名
        trainable: False 时优化器跳过该参数（freeze-encoder 模式）
        grad: 与 data 同形状的累积梯度
    """

    def __init__(self, name: str, data: ArrayLike, trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype}, trainable={self.trainable})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class TapeNode:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """
    有序操作记录带（记录顺序即拓扑序）。

    Usage:
        with Tape() as tape:
            loss = cross_entropy(model.forward(X, training=True), y)
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn) -> None:
        if self.consumed:
            raise UsageError("Cannot record on a consumed tape; call reset() first")
        node = TapeNode(op, inputs, output, backward_fn)
        self.nodes.append(node)
        output._node = node
        output._tape = self

    def reset(self) -> None:
        for node in self.nodes:
            node.output._node = None
            node.output._tape = None
        self.nodes = []
        self.consumed = False

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        if loss._tape is not self:
            raise UsageError("Loss tensor was not recorded on this tape")
        return backward(loss)


def make_result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """创建算子输出并在活动 tape 上登记。"""
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires_grad, dtype=data.dtype)
    if _settings["debug"] and not np.all(np.isfinite(out.data)):
        raise DataError(f"Non-finite values produced by op '{op}'")
    tape = active_tape()
    if tape is not None and requires_grad:
        tape.record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor) -> Dict[str, np.ndarray]:
    """
    从标量 loss 反向遍历 tape，累加梯度。

    Args:
        loss: 记录在 tape 上的标量张量

    Returns:
        Dict[str, np.ndarray]: 参数名 -> 累积后的梯度（仅含 tape 上出现的 Parameter）

    Raises:
        UsageError: loss 非标量、未连接到 tape、或 tape 已被消费
    """
    if loss.size != 1:
        raise UsageError(f"backward() requires a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise UsageError("Loss is not connected to a tape (record the forward pass inside `with Tape():`)")
    if tape.consumed:
        raise UsageError("Tape already consumed; record a new forward pass")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: Dict[int, Tensor] = {id(loss): loss}

    for node in reversed(tape.nodes):
        grad_out = grads.pop(id(node.output), None)
        if grad_out is None:
            continue
        input_grads = node.backward_fn(grad_out)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad
                holders[key] = tensor

    result: Dict[str, np.ndarray] = {}
    for key, grad in grads.items():
        tensor = holders[key]
        if tensor._tape is tape:
            continue
        grad = np.asarray(grad, dtype=tensor.data.dtype).reshape(tensor.shape)
        if tensor.grad is None:
            tensor.grad = np.zeros_like(tensor.data)
        tensor.grad += grad
        if isinstance(tensor, Parameter):
            result[tensor.name] = tensor.grad

    tape.reset()
    tape.consumed = True
    return result
