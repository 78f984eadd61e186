# -*- coding: utf-8 -*-
"""
Checkpoint 读写

文件布局（小端）：
    magic "EMGT" | version u16 | header_len u32 | header (UTF-8 JSON, 键排序)
    | 张量负载（按目录顺序紧密排列）

header:
    config      ModelConfig 字段
    provenance  数据集名、epoch 数、种子、指标历史、来源 checkpoint 哈希等
    dtype       "<f4"（默认）或 "<f8"（64 位模型）
    tensors     [{name, shape, offset, nbytes}]，offset 相对负载起点
    optimizer   {"t": 步数} 或 null；Adam 矩以 "adam.m.<name>" / "adam.v.<name>" 存于目录
"""

import hashlib
import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from pydantic import ValidationError

from pipelines.emgttl.errors import CheckpointVersionError, LoadError, ShapeError
from pipelines.emgttl.modules.autodiff import Parameter
from pipelines.emgttl.modules.model import EMGTTLModel, ModelConfig
from pipelines.emgttl.modules.trainer.optimizer import AdamState
from tools.hashing import get_arrays_sha256

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"EMGT"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_SUPPORTED_DTYPES = ("<f4", "<f8")
_ADAM_M = "adam.m."
_ADAM_V = "adam.v."


@dataclass
class Checkpoint:
    """
    迁移学习的基本单元：配置 + 权重 + 可选优化器状态 + 训练溯源

    Attributes:
        config: 模型配置
        weights: 参数名 -> 数组（布局顺序）
        provenance: 溯源信息（JSON 可序列化）
        optimizer: Adam 状态（可选）
        format_version: 文件格式版本
    """

    config: ModelConfig
    weights: "OrderedDict[str, np.ndarray]"
    provenance: Dict[str, Any] = field(default_factory=dict)
    optimizer: Optional[AdamState] = None
    format_version: int = CHECKPOINT_VERSION

    @classmethod
    def from_model(
        cls, model: EMGTTLModel, provenance: Optional[Dict[str, Any]] = None, optimizer: Optional[AdamState] = None
    ) -> "Checkpoint":
        """快照当前模型权重（深拷贝）。"""
        weights = OrderedDict((name, p.data.copy()) for name, p in model.params.items())
        snapshot = None
        if optimizer is not None:
            snapshot = AdamState(
                m={k: v.copy() for k, v in optimizer.m.items()},
                v={k: v.copy() for k, v in optimizer.v.items()},
                t=optimizer.t,
            )
        return cls(config=model.config, weights=weights, provenance=dict(provenance or {}), optimizer=snapshot)

    def to_model(self) -> EMGTTLModel:
        """重建模型（拷贝权重，固定位置编码保持不可训练）。"""
        fixed = {"embed.E_pos"} if self.config.pos_embedding == "sinusoidal" else set()
        params = OrderedDict(
            (name, Parameter(name, array.copy(), trainable=name not in fixed, dtype=array.dtype))
            for name, array in self.weights.items()
        )
        return EMGTTLModel(self.config, params)

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.weights.values())).dtype

    def weights_hash(self) -> str:
        return get_arrays_sha256(self.weights.items())


def weights_hash(weights: Union["OrderedDict[str, np.ndarray]", EMGTTLModel, Checkpoint]) -> str:
    """权重集合的 SHA-256（名称、形状、dtype、字节均参与）。"""
    if isinstance(weights, EMGTTLModel):
        return weights.weights_hash()
    if isinstance(weights, Checkpoint):
        return weights.weights_hash()
    return get_arrays_sha256(weights.items())


def _tensor_items(ckpt: Checkpoint):
    for name, array in ckpt.weights.items():
        yield name, array
    if ckpt.optimizer is not None:
        for name in ckpt.weights:
            if name in ckpt.optimizer.m:
                yield _ADAM_M + name, ckpt.optimizer.m[name]
                yield _ADAM_V + name, ckpt.optimizer.v[name]


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """序列化为字节串（确定性：键排序，张量按目录顺序）。"""
    dtype = np.dtype(ckpt.dtype).newbyteorder("<")
    if dtype.str not in _SUPPORTED_DTYPES:
        raise LoadError(f"Unsupported checkpoint dtype {dtype}")

    directory, payloads, offset = [], [], 0
    for name, array in _tensor_items(ckpt):
        raw = np.ascontiguousarray(array, dtype=dtype).tobytes()
        directory.append({"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)

    header = {
        "config": ckpt.config.model_dump(mode="json"),
        "provenance": ckpt.provenance,
        "dtype": dtype.str,
        "tensors": directory,
        "optimizer": {"t": ckpt.optimizer.t} if ckpt.optimizer is not None else None,
        "payload_sha256": hashlib.sha256(b"".join(payloads)).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _PREFIX.pack(CHECKPOINT_MAGIC, ckpt.format_version, len(header_bytes)) + header_bytes + b"".join(payloads)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(ckpt))
    logger.info(f"Checkpoint saved: {path} ({len(ckpt.weights)} tensors, hash {ckpt.weights_hash()[:12]})")
    return path


def decode_checkpoint(data: bytes, path: Optional[str] = None) -> Checkpoint:
    """
    反序列化 checkpoint

    Raises:
        LoadError: magic 错误、截断、header 损坏（附字节偏移）
        CheckpointVersionError: 版本高于当前代码支持的版本
    """
    if len(data) < _PREFIX.size:
        raise LoadError(f"Truncated checkpoint prefix ({len(data)} bytes)", path=path, offset=len(data))
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise LoadError(f"Bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", path=path, offset=0)
    if version > CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"Checkpoint format version {version} is newer than supported version {CHECKPOINT_VERSION}",
            path=path,
            offset=4,
        )
    if version < 1:
        raise LoadError(f"Invalid checkpoint format version {version}", path=path, offset=4)

    header_start = _PREFIX.size
    payload_start = header_start + header_len
    if len(data) < payload_start:
        raise LoadError(f"Truncated checkpoint header (declared {header_len} bytes)", path=path, offset=len(data))
    try:
        header = json.loads(data[header_start:payload_start].decode("utf-8"))
        dtype = np.dtype(header["dtype"])
        directory = header["tensors"]
        config = ModelConfig(**header["config"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise LoadError(f"Corrupt checkpoint header: {e}", path=path, offset=header_start) from e
    except ValidationError as e:
        raise LoadError(f"Invalid model config in checkpoint header: {e}", path=path, offset=header_start) from e
    if dtype.str not in _SUPPORTED_DTYPES:
        raise LoadError(f"Unsupported tensor dtype {dtype.str}", path=path, offset=header_start)

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    expected_end = 0
    for entry in directory:
        try:
            start = payload_start + int(entry["offset"])
            shape = tuple(int(s) for s in entry["shape"])
            declared = int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as e:
            raise LoadError(f"Corrupt tensor directory entry {entry!r}", path=path, offset=header_start) from e
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != declared:
            raise LoadError(f"Tensor '{entry['name']}' size mismatch in directory", path=path, offset=start)
        if start + nbytes > len(data):
            raise LoadError(f"Truncated payload for tensor '{entry['name']}'", path=path, offset=len(data))
        tensors[entry["name"]] = np.frombuffer(data, dtype=dtype, count=nbytes // dtype.itemsize, offset=start).reshape(shape).copy()
        expected_end = max(expected_end, start + nbytes)
    if len(data) != max(expected_end, payload_start):
        raise LoadError("Unexpected trailing bytes after tensor payload", path=path, offset=max(expected_end, payload_start))
    checksum = header.get("payload_sha256")
    if checksum is not None and hashlib.sha256(data[payload_start:]).hexdigest() != checksum:
        raise LoadError("Payload checksum mismatch (corrupted tensor data)", path=path, offset=payload_start)

    weights = OrderedDict((k, v) for k, v in tensors.items() if not k.startswith((_ADAM_M, _ADAM_V)))
    optimizer = None
    if header.get("optimizer") is not None:
        optimizer = AdamState(
            m={k[len(_ADAM_M):]: v for k, v in tensors.items() if k.startswith(_ADAM_M)},
            v={k[len(_ADAM_V):]: v for k, v in tensors.items() if k.startswith(_ADAM_V)},
            t=int(header["optimizer"]["t"]),
        )
    ckpt = Checkpoint(config=config, weights=weights, provenance=header.get("provenance") or {}, optimizer=optimizer, format_version=version)
    try:
        ckpt.to_model()
    except ShapeError as e:
        raise LoadError(f"Checkpoint tensors do not match its model config: {e}", path=path, offset=payload_start) from e
    return ckpt


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"Checkpoint not found: {path}", path=str(path))
    ckpt = decode_checkpoint(path.read_bytes(), path=str(path))
    logger.info(f"Checkpoint loaded: {path} (hash {ckpt.weights_hash()[:12]})")
    return ckpt
