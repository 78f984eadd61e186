# -*- coding: utf-8 -*-
"""
SignalTrial：一次多通道原始采集（C 通道 × T 采样点）及其元数据
"""

from dataclasses import dataclass, replace

import numpy as np

from pipelines.emgttl.errors import DataError


@dataclass(frozen=True)
class SignalTrial:
    """
    单次试验记录

    Attributes:
        samples: [C, T] 实数矩阵（任意物理单位）
        sample_rate_hz: 采样率，> 0
        subject_id: 受试者标识
        trial_id: 试验编号
        label: 活动类别索引
    """

    samples: np.ndarray
    sample_rate_hz: float
    subject_id: str = "0"
    trial_id: int = 0
    label: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise DataError(f"Trial {self.trial_id}: samples must be a non-empty C x T matrix, got shape {samples.shape}")
        if not self.sample_rate_hz > 0:
            raise DataError(f"Trial {self.trial_id}: sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"Trial {self.trial_id} (subject {self.subject_id}) contains NaN/Inf samples")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def nyquist_hz(self) -> float:
        return self.sample_rate_hz / 2.0

    def with_samples(self, samples: np.ndarray) -> "SignalTrial":
        """返回元数据相同、采样替换后的新试验。"""
        return replace(self, samples=samples)
