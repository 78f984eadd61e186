# -*- coding: utf-8 -*-
"""
小批量迭代
迭代器为单一所有者，不可在多个消费者之间共享。
"""

from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.dataset.segmentation import Segment


def derive_seed(*keys: int) -> int:
    """由整数序列派生一个 32 位种子（相同输入得到相同种子）。"""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def epoch_seed(seed: int, epoch: int) -> int:
    """每个 epoch 的打乱种子。"""
    return derive_seed(seed, epoch)


def stack_segments(segments: Sequence[Segment], dtype=np.float32) -> Tuple[np.ndarray, np.ndarray]:
    """堆叠为 X [B, C, W] 与 y [B]。"""
    if not segments:
        return np.zeros((0, 0, 0), dtype=dtype), np.zeros(0, dtype=np.int64)
    X = np.stack([s.X for s in segments]).astype(dtype, copy=False)
    y = np.fromiter((s.y for s in segments), dtype=np.int64, count=len(segments))
    return X, y


def batches(
    segments: Sequence[Segment],
    batch_size: int,
    shuffle_seed: Optional[int] = None,
    dtype=np.float32,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    按批产出 (X, y)，最后一个不满的批次照常产出

    Args:
        segments: 片段列表
        batch_size: 批大小，>= 1
        shuffle_seed: None 保持原顺序；否则按种子确定性打乱
        dtype: X 的数值类型

    Yields:
        (X [b, C, W], y [b])
    """
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    n = len(segments)
    if n == 0:
        return
    order = np.arange(n) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(n)
    for start in range(0, n, batch_size):
        yield stack_segments([segments[i] for i in order[start : start + batch_size]], dtype=dtype)
