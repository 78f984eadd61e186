# -*- coding: utf-8 -*-
"""
滑动窗口分段
"""

import logging
import warnings
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)


class ShortTrialWarning(UserWarning):
    """试验长度不足一个窗口，未产生任何片段。"""


def to_samples(ms: float, sample_rate_hz: float) -> int:
    return int(round(ms / 1000.0 * sample_rate_hz))


class SegmentationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    window_ms: PositiveFloat = 500.0
    step_ms: PositiveFloat = 250.0

    @model_validator(mode="after")
    def check_step(self) -> "SegmentationConfig":
        if self.step_ms > self.window_ms:
            raise ValueError(f"step_ms ({self.step_ms}) must not exceed window_ms ({self.window_ms})")
        return self

    def window_samples(self, sample_rate_hz: float) -> int:
        return to_samples(self.window_ms, sample_rate_hz)

    def step_samples(self, sample_rate_hz: float) -> int:
        return to_samples(self.step_ms, sample_rate_hz)

    def resolve(self, sample_rate_hz: float, channels: int) -> Tuple[int, int]:
        """
        换算为采样点数 (W, S) 并校验几何

        Raises:
            ConfigurationError: W 或 S 小于 1，或 W 不能被 C 整除（附最近的合法窗长）
        """
        window = self.window_samples(sample_rate_hz)
        step = self.step_samples(sample_rate_hz)
        if window < 1 or step < 1:
            raise ConfigurationError(
                f"Window {self.window_ms} ms / step {self.step_ms} ms round to W={window}, S={step} samples at {sample_rate_hz:g} Hz"
            )
        if window % channels:
            suggested = max(channels, int(round(window / channels)) * channels)
            suggested_ms = suggested / sample_rate_hz * 1000.0
            raise ConfigurationError(
                f"Window W={window} samples is not divisible by C={channels} (W mod C = {window % channels}); "
                f"nearest valid window is {suggested} samples = {suggested_ms:g} ms"
            )
        return window, step


@dataclass(frozen=True)
class Segment:
    """
    单个 C × W 窗口

    Attributes:
        X: [C, W] 样本
        y: 类别索引
        subject_id / trial_id / start: 溯源信息
    """

    X: np.ndarray
    y: int
    subject_id: str
    trial_id: int
    start: int

    @property
    def provenance(self) -> Tuple[str, int, int]:
        return self.subject_id, self.trial_id, self.start


def segment_count(length: int, window: int, step: int) -> int:
    """k = floor((T - W) / S) + 1，T < W 时为 0。"""
    if length < window:
        return 0
    return (length - window) // step + 1


def segment_trial(trial: SignalTrial, cfg: SegmentationConfig) -> List[Segment]:
    """
    按滑动窗口切分单个试验，第 i 个片段起点为 i·S，标签沿用试验标签

    Returns:
        List[Segment]: T < W 时返回空列表并发出 ShortTrialWarning
    """
    window, step = cfg.resolve(trial.sample_rate_hz, trial.channels)
    count = segment_count(trial.length, window, step)
    if count == 0:
        message = f"Trial {trial.trial_id} (subject {trial.subject_id}) has T={trial.length} < W={window}; no segments"
        logger.warning(message)
        warnings.warn(message, ShortTrialWarning, stacklevel=2)
        return []

    return [
        Segment(
            X=np.ascontiguousarray(trial.samples[:, i * step : i * step + window]),
            y=trial.label,
            subject_id=trial.subject_id,
            trial_id=trial.trial_id,
            start=i * step,
        )
        for i in range(count)
    ]
