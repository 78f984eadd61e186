# -*- coding: utf-8 -*-
"""
SHA-256 工具
计算文件与权重集合的哈希值，用于 checkpoint 溯源链和比特一致性校验
"""

import hashlib
from pathlib import Path
from typing import Iterable, Tuple, Union

import numpy as np


def get_file_sha256(file_path: Union[str, Path]) -> str:
    """计算文件的 SHA-256 哈希值。"""
    sha256 = hashlib.sha256()
    with open(file_path, "rb") as f:
        while True:
            data = f.read(65536)  # 64kb chunks
            if not data:
                break
            sha256.update(data)
    return sha256.hexdigest()


def get_arrays_sha256(named_arrays: Iterable[Tuple[str, np.ndarray]]) -> str:
    """
    计算一组命名数组的 SHA-256（名称、形状、dtype 与原始字节均参与）。

    Args:
        named_arrays: (name, array) 序列，顺序参与哈希
    """
    sha256 = hashlib.sha256()
    for name, array in named_arrays:
        array = np.ascontiguousarray(array)
        sha256.update(name.encode("utf-8"))
        sha256.update(repr(array.shape).encode("ascii"))
        sha256.update(array.dtype.str.encode("ascii"))
        sha256.update(array.tobytes())
    return sha256.hexdigest()
