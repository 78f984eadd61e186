# -*- coding: utf-8 -*-
"""
片段缓存文件

布局（小端）：
    16 字节头   magic "EMGS" | version u16 | C u16 | W u32 | count u32
    样本        count × C × W float32，通道优先
    索引        count × (label, trial_id, start, subject_index) int32
    受试者表    u32 长度 + UTF-8 JSON 数组（subject_index 指向该数组）
"""

import json
import logging
import struct
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from pipelines.emgttl.errors import DataError, LoadError
from pipelines.emgttl.modules.dataset.segmentation import Segment

logger = logging.getLogger(__name__)

ARCHIVE_MAGIC = b"EMGS"
ARCHIVE_VERSION = 1
_HEADER = struct.Struct("<4sHHII")
_LENGTH = struct.Struct("<I")
_SAMPLE_DTYPE = np.dtype("<f4")
_INDEX_DTYPE = np.dtype("<i4")


def write_segment_archive(path: Union[str, Path], segments: Sequence[Segment]) -> Path:
    """写出片段缓存，所有片段必须形状一致。"""
    path = Path(path)
    if segments:
        channels, window = segments[0].X.shape
    else:
        channels, window = 0, 0
    for seg in segments:
        if seg.X.shape != (channels, window):
            raise DataError(f"Segment shape {seg.X.shape} differs from archive geometry {(channels, window)}")

    subjects = sorted({seg.subject_id for seg in segments})
    subject_index = {s: i for i, s in enumerate(subjects)}
    index = np.array(
        [(seg.y, seg.trial_id, seg.start, subject_index[seg.subject_id]) for seg in segments], dtype=_INDEX_DTYPE
    ).reshape(len(segments), 4)
    payload = (
        np.stack([seg.X for seg in segments]).astype(_SAMPLE_DTYPE)
        if segments
        else np.zeros(0, dtype=_SAMPLE_DTYPE)
    )
    table = json.dumps(subjects).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(ARCHIVE_MAGIC, ARCHIVE_VERSION, channels, window, len(segments)))
        f.write(np.ascontiguousarray(payload).tobytes())
        f.write(index.tobytes())
        f.write(_LENGTH.pack(len(table)))
        f.write(table)
    logger.debug(f"Wrote {len(segments)} segments ({channels}x{window}) to {path}")
    return path


def read_segment_archive(path: Union[str, Path]) -> List[Segment]:
    """
    读取片段缓存

    Raises:
        LoadError: 文件缺失、magic 不符、版本过新、内容截断（附字节偏移）
    """
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"Segment archive not found: {path}", path=str(path))
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise LoadError(f"Truncated segment archive header in {path}", path=str(path), offset=len(data))

    magic, version, channels, window, count = _HEADER.unpack_from(data, 0)
    if magic != ARCHIVE_MAGIC:
        raise LoadError(f"Bad magic {magic!r} in {path}, expected {ARCHIVE_MAGIC!r}", path=str(path), offset=0)
    if version > ARCHIVE_VERSION:
        raise LoadError(
            f"Segment archive version {version} is newer than supported version {ARCHIVE_VERSION}", path=str(path), offset=4
        )

    offset = _HEADER.size
    sample_bytes = count * channels * window * _SAMPLE_DTYPE.itemsize
    index_bytes = count * 4 * _INDEX_DTYPE.itemsize
    if len(data) < offset + sample_bytes + index_bytes + _LENGTH.size:
        raise LoadError(f"Truncated segment archive {path}", path=str(path), offset=len(data))

    samples = np.frombuffer(data, dtype=_SAMPLE_DTYPE, count=count * channels * window, offset=offset)
    samples = samples.reshape(count, channels, window)
    offset += sample_bytes
    index = np.frombuffer(data, dtype=_INDEX_DTYPE, count=count * 4, offset=offset).reshape(count, 4)
    offset += index_bytes
    (table_len,) = _LENGTH.unpack_from(data, offset)
    offset += _LENGTH.size
    if len(data) < offset + table_len:
        raise LoadError(f"Truncated subject table in {path}", path=str(path), offset=len(data))
    try:
        subjects = json.loads(data[offset : offset + table_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise LoadError(f"Corrupt subject table in {path}: {e}", path=str(path), offset=offset) from e

    return [
        Segment(
            X=samples[i].copy(),
            y=int(label),
            subject_id=str(subjects[subject]),
            trial_id=int(trial_id),
            start=int(start),
        )
        for i, (label, trial_id, start, subject) in enumerate(index)
    ]
