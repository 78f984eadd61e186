# -*- coding: utf-8 -*-
"""
小波阈值去噪
多级离散小波分解 -> 细节系数软阈值（通用阈值 σ√(2 ln n)，σ 由最细一级细节系数的 MAD 估计）-> 重构
"""

import logging
import math
from typing import Literal

import numpy as np
import pywt
from pydantic import BaseModel, ConfigDict, field_validator

from pipelines.emgttl.errors import ConfigurationError, DataError
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)

_MAD_TO_SIGMA = 0.6745


class DenoiseSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    wavelet: str = "db4"
    levels: int = 4
    threshold_rule: Literal["universal-soft"] = "universal-soft"
    mode: str = "symmetric"

    @field_validator("wavelet")
    @classmethod
    def validate_wavelet(cls, v: str) -> str:
        if v not in pywt.wavelist(kind="discrete"):
            raise ValueError(f"unknown discrete wavelet '{v}'")
        return v

    @field_validator("levels")
    @classmethod
    def validate_levels(cls, v: int) -> int:
        if v < 1:
            raise ValueError("levels must be >= 1")
        return v


def universal_threshold(finest_detail: np.ndarray, length: int) -> float:
    """σ√(2 ln n)，σ = median(|cD1|) / 0.6745。"""
    sigma = float(np.median(np.abs(finest_detail))) / _MAD_TO_SIGMA
    return sigma * math.sqrt(2.0 * math.log(max(length, 1)))


def _denoise_channel(x: np.ndarray, spec: DenoiseSpec) -> np.ndarray:
    coeffs = pywt.wavedec(x, spec.wavelet, mode=spec.mode, level=spec.levels)
    threshold = universal_threshold(coeffs[-1], x.shape[0])
    coeffs = [coeffs[0]] + [pywt.threshold(c, threshold, mode="soft") for c in coeffs[1:]]
    return pywt.waverec(coeffs, spec.wavelet, mode=spec.mode)[: x.shape[0]]


def wavelet_denoise(trial: SignalTrial, spec: DenoiseSpec) -> SignalTrial:
    """
    逐通道小波阈值去噪，只对细节系数做软阈值，近似系数保持不变

    Args:
        trial: 输入试验
        spec: 小波、分解级数与阈值规则

    Returns:
        SignalTrial: 形状不变的新试验（float64）

    Raises:
        ConfigurationError: levels > floor(log2 T)
    """
    length = trial.length
    max_levels = int(math.floor(math.log2(length))) if length > 0 else 0
    if spec.levels > max_levels:
        raise ConfigurationError(
            f"Wavelet denoise: {spec.levels} levels exceed floor(log2 T)={max_levels} for T={length}"
        )
    x = np.asarray(trial.samples, dtype=np.float64)
    out = np.stack([_denoise_channel(channel, spec) for channel in x])
    if not np.all(np.isfinite(out)):
        raise DataError(f"Trial {trial.trial_id}: wavelet denoise produced non-finite output")
    return trial.with_samples(out)
