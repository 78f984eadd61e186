# -*- coding: utf-8 -*-
"""
EMGTTL 异常定义
所有模块抛出的业务异常均继承自 EMGTTLError，CLI 依据异常类型决定退出码：
    - ConfigurationError / pydantic.ValidationError -> 2
    - 其他 EMGTTLError -> 1
"""

from typing import Iterable, Optional


class EMGTTLError(RuntimeError):
    """EMGTTL 基础异常。"""


class ConfigurationError(EMGTTLError, ValueError):
    """配置非法：频率越界、几何不整除、划分重叠、超参数越界等。"""


class DataError(EMGTTLError, ValueError):
    """数据非法：含 NaN/Inf、标签越界等。"""


class DomainError(DataError):
    """数学定义域错误（如 μ-law 输入超出 [-1, 1]）。"""


class ShapeError(EMGTTLError, ValueError):
    """张量形状不匹配。"""


class UsageError(EMGTTLError):
    """接口误用：非标量 loss、重复消费 tape、空评估集等。"""


class TrainingError(EMGTTLError):
    """训练过程错误（非有限梯度）。"""

    def __init__(self, message: str, *, parameter: Optional[str] = None, step: Optional[int] = None):
        super().__init__(message)
        self.parameter = parameter
        self.step = step


class TransferError(EMGTTLError):
    """迁移学习几何不兼容。"""

    def __init__(self, message: str, *, fields: Iterable[str] = ()):
        super().__init__(message)
        self.fields = list(fields)


class LoadError(EMGTTLError):
    """数据集或 checkpoint 加载失败。"""

    def __init__(self, message: str, *, path: Optional[str] = None, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.path = path
        self.offset = offset


class CheckpointVersionError(LoadError):
    """checkpoint 格式版本高于当前代码支持的版本。"""
