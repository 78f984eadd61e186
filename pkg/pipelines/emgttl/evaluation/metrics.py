# -*- coding: utf-8 -*-
"""
评估指标计算
分类指标（混淆矩阵）与信号指标（RMS 衰减、Welch 谱密度、互相关滞后）
"""

from typing import Tuple

import numpy as np
from scipy import signal


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray, num_classes: int) -> np.ndarray:
    """行 = 真实类别，列 = 预测类别。"""
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return confusion


def argmax_lowest(logits: np.ndarray) -> np.ndarray:
    """逐行 argmax，并列时取最小索引。"""
    return np.argmax(np.atleast_2d(logits), axis=-1)


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x)))


def middle(x: np.ndarray, fraction: float = 0.5) -> np.ndarray:
    """取最后一维中间 fraction 部分（去掉两端暂态）。"""
    n = x.shape[-1]
    margin = int(n * (1.0 - fraction) / 2.0)
    return x[..., margin : n - margin]


def gain_db(reference: np.ndarray, output: np.ndarray) -> float:
    """20·log10(RMS(output) / RMS(reference))。"""
    return 20.0 * np.log10(max(rms(output), 1e-300) / rms(reference))


def welch_psd(x: np.ndarray, sample_rate_hz: float, nperseg: int) -> Tuple[np.ndarray, np.ndarray]:
    return signal.welch(x, fs=sample_rate_hz, nperseg=min(nperseg, x.shape[-1]), axis=-1)


def band_level_db(freqs: np.ndarray, psd: np.ndarray, low_hz: float, high_hz: float) -> float:
    """频带 [low, high] 内平均谱密度（dB）。"""
    mask = (freqs >= low_hz) & (freqs <= high_hz)
    return 10.0 * np.log10(float(np.mean(psd[..., mask])))


def bin_level_db(freqs: np.ndarray, psd: np.ndarray, freq_hz: float) -> float:
    """最接近 freq_hz 的频点上的谱密度（dB）。"""
    index = int(np.argmin(np.abs(freqs - freq_hz)))
    return 10.0 * np.log10(max(float(np.mean(psd[..., index])), 1e-300))


def peak_lag(reference: np.ndarray, output: np.ndarray) -> int:
    """互相关峰值对应的滞后（采样点）。"""
    corr = signal.correlate(output, reference, mode="full")
    lags = signal.correlation_lags(len(output), len(reference), mode="full")
    return int(lags[int(np.argmax(corr))])
