# -*- coding: utf-8 -*-
"""
幅值归一化与 μ-law 压扩
"""

import logging
from typing import Union

import numpy as np

from pipelines.emgttl.errors import ConfigurationError, DomainError
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)

Number = Union[float, np.ndarray]

_DOMAIN_SLACK = 1e-12


def rescale_unit(trial: SignalTrial) -> SignalTrial:
    """
    每个通道除以自身的最大绝对值，使其落在 [-1, 1]；全零通道原样保留。
    """
    x = np.asarray(trial.samples, dtype=np.float64)
    peak = np.max(np.abs(x), axis=1, keepdims=True)
    scaled = np.divide(x, peak, out=np.zeros_like(x), where=peak > 0)
    return trial.with_samples(np.clip(scaled, -1.0, 1.0))


def _check_mu(mu: float) -> None:
    if not mu > 0:
        raise ConfigurationError(f"mu must be positive, got {mu}")


def mu_law(x: Number, mu: float = 255.0) -> Number:
    """
    F(x) = sign(x) · ln(1 + μ|x|) / ln(1 + μ)，定义域 [-1, 1]

    Raises:
        ConfigurationError: mu <= 0
        DomainError: 存在 |x| > 1
    """
    _check_mu(mu)
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0 + _DOMAIN_SLACK):
        raise DomainError(f"mu_law input outside [-1, 1] (max |x| = {float(np.max(np.abs(arr))):g})")
    arr = np.clip(arr, -1.0, 1.0)
    y = np.sign(arr) * np.log1p(mu * np.abs(arr)) / np.log1p(mu)
    return float(y) if np.ndim(x) == 0 else y


def inverse_mu_law(y: Number, mu: float = 255.0) -> Number:
    """F⁻¹(y) = sign(y) · ((1 + μ)^|y| - 1) / μ"""
    _check_mu(mu)
    arr = np.asarray(y, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0 + _DOMAIN_SLACK):
        raise DomainError(f"inverse_mu_law input outside [-1, 1] (max |y| = {float(np.max(np.abs(arr))):g})")
    arr = np.clip(arr, -1.0, 1.0)
    x = np.sign(arr) * np.expm1(np.abs(arr) * np.log1p(mu)) / mu
    return float(x) if np.ndim(y) == 0 else x
