# -*- coding: utf-8 -*-
"""
合成 sEMG 数据生成器
每个类别在每个通道上有各自的频谱峰（带限噪声），叠加通道幅度包络、宽带噪声与少量 50 Hz 工频干扰，
输出为类似物理量纲（微伏级）的未归一化信号。结果只由 seed 决定。
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, NonNegativeInt, PositiveFloat, PositiveInt
from scipy import signal

from pipelines.emgttl.modules.dataset.manifest import DatasetManifest, TrialEntry
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)

_PEAKS_PER_CHANNEL = 2
_PEAK_HALF_WIDTH = 0.1
_AMPLITUDE_UV = 50.0
_BROADBAND_LEVEL = 0.35
_HUM_LEVEL = 0.05
_HUM_HZ = 50.0


class SynthSpec(BaseModel):
    """
    合成数据集规格

    Attributes:
        subject_offset: 受试者编号偏移，用于生成与另一数据集受试者不重叠的任务
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_classes: PositiveInt = 4
    subjects: PositiveInt = 1
    trials_per_class: PositiveInt = 5
    duration_s: PositiveFloat = 4.0
    sample_rate_hz: PositiveFloat = 2000.0
    channels: PositiveInt = 5
    subject_offset: NonNegativeInt = 0
    name: str = "synthetic"


@dataclass(frozen=True)
class _ClassProfile:
    sos: List[List[np.ndarray]]  # [channel][peak]
    weights: np.ndarray          # [C, peaks]
    gains: np.ndarray            # [C]
    envelope_hz: float


def _peak_band(sample_rate_hz: float) -> Tuple[float, float]:
    return min(30.0, 0.05 * sample_rate_hz), min(450.0, 0.35 * sample_rate_hz)


def _class_profile(spec: SynthSpec, seed: int, label: int) -> _ClassProfile:
    rng = np.random.default_rng([seed, label])
    lo, hi = _peak_band(spec.sample_rate_hz)
    peaks = rng.uniform(lo, hi, size=(spec.channels, _PEAKS_PER_CHANNEL))
    sos = [
        [
            signal.butter(
                2,
                [p * (1.0 - _PEAK_HALF_WIDTH), p * (1.0 + _PEAK_HALF_WIDTH)],
                btype="bandpass",
                fs=spec.sample_rate_hz,
                output="sos",
            )
            for p in channel_peaks
        ]
        for channel_peaks in peaks
    ]
    return _ClassProfile(
        sos=sos,
        weights=rng.uniform(0.5, 1.0, size=(spec.channels, _PEAKS_PER_CHANNEL)),
        gains=rng.uniform(0.4, 1.0, size=spec.channels),
        envelope_hz=float(rng.uniform(0.5, 2.0)),
    )


def _band_noise(rng: np.random.Generator, sos: np.ndarray, length: int) -> np.ndarray:
    y = signal.sosfilt(sos, rng.standard_normal(length))
    std = float(np.std(y))
    return y / std if std > 0 else y


def _generate_trial(
    spec: SynthSpec, profile: _ClassProfile, subject_gains: np.ndarray, seed: int, subject: int, label: int, trial_id: int
) -> np.ndarray:
    rng = np.random.default_rng([seed, subject, label, trial_id])
    length = max(1, int(round(spec.duration_s * spec.sample_rate_hz)))
    t = np.arange(length) / spec.sample_rate_hz

    tonal = np.zeros((spec.channels, length))
    for ch in range(spec.channels):
        for k in range(_PEAKS_PER_CHANNEL):
            tonal[ch] += profile.weights[ch, k] * _band_noise(rng, profile.sos[ch][k], length)

    phases = rng.uniform(0.0, 2.0 * np.pi, size=(spec.channels, 1))
    envelope = 1.0 + 0.5 * np.sin(2.0 * np.pi * profile.envelope_hz * t[None, :] + phases)
    broadband = _BROADBAND_LEVEL * rng.standard_normal((spec.channels, length))
    hum = _HUM_LEVEL * np.sin(2.0 * np.pi * _HUM_HZ * t + rng.uniform(0.0, 2.0 * np.pi))

    scale = _AMPLITUDE_UV * (subject_gains * profile.gains)[:, None]
    return (scale * (envelope * tonal + broadband) + _AMPLITUDE_UV * hum[None, :]).astype(np.float32)


def synth_generate(spec: SynthSpec, seed: int = 0) -> Tuple[DatasetManifest, List[SignalTrial]]:
    """
    生成确定性的合成数据集

    Args:
        spec: 类别数、受试者数、每类试验数、时长、采样率、通道数
        seed: 随机种子，相同 seed 生成逐比特相同的数据

    Returns:
        (DatasetManifest, List[SignalTrial]): 清单中的文件路径为相对路径，可直接交给 write_dataset
    """
    profiles = [_class_profile(spec, seed, c) for c in range(spec.num_classes)]
    entries, trials = [], []
    for s in range(spec.subjects):
        subject = spec.subject_offset + s + 1
        subject_gains = np.random.default_rng([seed, subject]).uniform(0.7, 1.3, size=spec.channels)
        for c, profile in enumerate(profiles):
            for trial_id in range(1, spec.trials_per_class + 1):
                samples = _generate_trial(spec, profile, subject_gains, seed, subject, c, trial_id)
                entries.append(
                    TrialEntry(
                        file=f"subject{subject:02d}/class{c:02d}_trial{trial_id:02d}.f32",
                        subject_id=str(subject),
                        trial_id=trial_id,
                        label=c,
                    )
                )
                trials.append(
                    SignalTrial(
                        samples=samples,
                        sample_rate_hz=spec.sample_rate_hz,
                        subject_id=str(subject),
                        trial_id=trial_id,
                        label=c,
                    )
                )

    manifest = DatasetManifest(
        name=spec.name,
        channels=spec.channels,
        sample_rate_hz=spec.sample_rate_hz,
        classes=[f"class_{c:02d}" for c in range(spec.num_classes)],
        trials=entries,
    )
    logger.debug(f"Synthesized {len(trials)} trials ({spec.num_classes} classes, seed={seed})")
    return manifest, trials
