# -*- coding: utf-8 -*-
"""
IIR 滤波
陷波 / 带阻 / 带通使用单个二阶 IIR 节（biquad），高通 / 低通使用 Butterworth 二阶节级联；
默认零相位（前向-后向），边界以对称反射延拓。
"""

import logging
from typing import Literal

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator
from scipy import signal

from pipelines.emgttl.errors import ConfigurationError, DataError
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)

FilterKind = Literal["notch", "lowpass", "highpass", "bandstop", "bandpass"]


class FilterSpec(BaseModel):
    """
    滤波器规格

    Attributes:
        kind: notch | lowpass | highpass | bandstop | bandpass
        freq_hz: 中心频率 f0（notch/bandstop/bandpass）或截止频率（lowpass/highpass）
        q_factor: 品质因数，带宽 = f0 / Q
        order: Butterworth 阶数（正偶数），只对 lowpass / highpass 生效
        zero_phase: 是否前向-后向零相位滤波
    """

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    kind: FilterKind
    freq_hz: float = Field(validation_alias=AliasChoices("freq_hz", "f0_hz", "cutoff_hz"))
    q_factor: float = 35.0
    order: int = 4
    zero_phase: bool = True

    @field_validator("freq_hz", "q_factor")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @field_validator("order")
    @classmethod
    def validate_order(cls, v: int) -> int:
        if v < 2 or v % 2:
            raise ValueError("order must be a positive even integer")
        return v

    def critical_frequencies(self) -> tuple:
        """返回设计时用到的所有临界频率。"""
        if self.kind == "bandstop":
            half_bw = self.freq_hz / self.q_factor / 2.0
            return (self.freq_hz - half_bw, self.freq_hz + half_bw)
        return (self.freq_hz,)


def design_sos(spec: FilterSpec, sample_rate_hz: float) -> np.ndarray:
    """
    设计二阶节（SOS）系数

    Raises:
        ConfigurationError: 任一临界频率 >= Nyquist
    """
    nyquist = sample_rate_hz / 2.0
    for freq in spec.critical_frequencies():
        if not 0 < freq < nyquist:
            raise ConfigurationError(
                f"{spec.kind} filter frequency {freq:g} Hz must lie strictly inside (0, Nyquist={nyquist:g} Hz)"
            )

    if spec.kind in ("notch", "bandstop"):
        b, a = signal.iirnotch(spec.freq_hz, spec.q_factor, fs=sample_rate_hz)
        return signal.tf2sos(b, a)
    if spec.kind == "bandpass":
        b, a = signal.iirpeak(spec.freq_hz, spec.q_factor, fs=sample_rate_hz)
        return signal.tf2sos(b, a)
    btype = "low" if spec.kind == "lowpass" else "high"
    return signal.butter(spec.order, spec.freq_hz, btype=btype, fs=sample_rate_hz, output="sos")


def _default_padlen(sos: np.ndarray) -> int:
    # 与 scipy.signal.sosfiltfilt 的默认值一致
    return 3 * (2 * len(sos) + 1 - min((sos[:, 2] == 0).sum(), (sos[:, 5] == 0).sum()))


def _causal_filter(sos: np.ndarray, x: np.ndarray, padlen: int) -> np.ndarray:
    """单向滤波：反射延拓做预热，稳态初始条件，再裁掉延拓段。"""
    padded = np.pad(x, ((0, 0), (padlen, 0)), mode="reflect")
    zi = signal.sosfilt_zi(sos)[:, None, :] * padded[:, 0][None, :, None]
    out, _ = signal.sosfilt(sos, padded, axis=-1, zi=zi)
    return out[:, padlen:]


def apply_filter(trial: SignalTrial, spec: FilterSpec) -> SignalTrial:
    """
    对每个通道独立滤波

    Args:
        trial: 输入试验
        spec: 滤波器规格

    Returns:
        SignalTrial: 形状与元数据不变的新试验（float64）

    Raises:
        ConfigurationError: 频率越过 Nyquist
        DataError: 输入非有限，或 T <= 3 × order
    """
    x = np.asarray(trial.samples, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DataError(f"Trial {trial.trial_id}: non-finite samples cannot be filtered")
    sos = design_sos(spec, trial.sample_rate_hz)
    length, order = x.shape[1], 2 * len(sos)
    if length <= 3 * order:
        raise DataError(f"Trial {trial.trial_id}: T={length} too short for order-{order} {spec.kind} filter")

    padlen = min(_default_padlen(sos), length - 1)
    if spec.zero_phase:
        y = signal.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=padlen)
    else:
        y = _causal_filter(sos, x, padlen)

    if not np.all(np.isfinite(y)):
        raise DataError(f"Trial {trial.trial_id}: {spec.kind} filter produced non-finite output")
    return trial.with_samples(np.ascontiguousarray(y))


def response_db(spec: FilterSpec, sample_rate_hz: float, freqs_hz) -> np.ndarray:
    """
    滤波器在给定频率处的幅度响应（dB），零相位模式计入前向-后向的平方效应。
    """
    sos = design_sos(spec, sample_rate_hz)
    _, h = signal.sosfreqz(sos, worN=np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64)), fs=sample_rate_hz)
    gain_db = 20.0 * np.log10(np.maximum(np.abs(h), 1e-300))
    return 2.0 * gain_db if spec.zero_phase else gain_db
