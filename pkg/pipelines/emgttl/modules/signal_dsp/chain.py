# -*- coding: utf-8 -*-
"""
预处理链
db1-style: notch(50) -> lowpass(500) -> wavelet denoise -> rescale -> μ-law
db4-style: highpass(20) -> 50 Hz band filter (默认带阻) -> rescale -> μ-law
custom:    任意 FilterSpec / DenoiseSpec 列表 -> rescale -> μ-law
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict

from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.signal_dsp.companding import mu_law, rescale_unit
from pipelines.emgttl.modules.signal_dsp.denoise import DenoiseSpec, wavelet_denoise
from pipelines.emgttl.modules.signal_dsp.filters import FilterSpec, apply_filter
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial
from tools.timer import timer

logger = logging.getLogger(__name__)

ChainStep = Union[FilterSpec, DenoiseSpec]
Chain = Union[Literal["db1-style", "db4-style"], Sequence[Union[ChainStep, Mapping[str, Any]]]]

NAMED_CHAINS = ("db1-style", "db4-style")

MAINS_HZ = 50.0
DB1_LOWPASS_HZ = 500.0
DB4_HIGHPASS_HZ = 20.0


class DspOptions(BaseModel):
    """预处理链的默认参数，对应 config.yaml 的 dsp 段。"""

    model_config = ConfigDict(extra="ignore", frozen=True)

    mu: float = 255.0
    notch_q: float = 35.0
    filter_order: int = 4
    zero_phase: bool = True
    wavelet: str = "db4"
    levels: int = 4
    db4_band: Literal["bandstop", "bandpass"] = "bandstop"

    @classmethod
    def from_config(cls, config: Optional[Dict[str, Any]]) -> "DspOptions":
        return cls(**((config or {}).get("dsp") or {}))


def parse_step(step: Union[ChainStep, Mapping[str, Any]]) -> ChainStep:
    """将字典形式的步骤解析为 FilterSpec（含 kind）或 DenoiseSpec。"""
    if isinstance(step, (FilterSpec, DenoiseSpec)):
        return step
    if not isinstance(step, Mapping):
        raise ConfigurationError(f"Invalid chain step: {step!r}")
    if "kind" in step:
        return FilterSpec.model_validate(dict(step))
    return DenoiseSpec.model_validate(dict(step))


def build_chain_steps(chain: Chain, options: Optional[DspOptions] = None) -> List[ChainStep]:
    """
    展开链名为有序步骤列表（不含 rescale 与 μ-law）

    Args:
        chain: "db1-style" | "db4-style" | 自定义步骤列表
        options: 滤波/小波默认参数

    Returns:
        List[ChainStep]: 依次执行的滤波与去噪步骤
    """
    opts = options or DspOptions()
    common = {"q_factor": opts.notch_q, "order": opts.filter_order, "zero_phase": opts.zero_phase}

    if isinstance(chain, str):
        if chain == "db1-style":
            return [
                FilterSpec(kind="notch", freq_hz=MAINS_HZ, **common),
                FilterSpec(kind="lowpass", freq_hz=DB1_LOWPASS_HZ, **common),
                DenoiseSpec(wavelet=opts.wavelet, levels=opts.levels),
            ]
        if chain == "db4-style":
            return [
                FilterSpec(kind="highpass", freq_hz=DB4_HIGHPASS_HZ, **common),
                FilterSpec(kind=opts.db4_band, freq_hz=MAINS_HZ, **common),
            ]
        raise ConfigurationError(f"Unknown chain '{chain}', expected one of {NAMED_CHAINS} or a list of steps")

    return [parse_step(step) for step in chain]


def run_steps(trial: SignalTrial, steps: Sequence[ChainStep]) -> SignalTrial:
    """按顺序执行滤波 / 去噪步骤。"""
    for step in steps:
        if isinstance(step, FilterSpec):
            trial = apply_filter(trial, step)
        else:
            trial = wavelet_denoise(trial, step)
    return trial


def preprocess_chain(
    trial: SignalTrial,
    chain: Chain,
    mu: Optional[float] = None,
    *,
    options: Optional[DspOptions] = None,
    compand: bool = True,
) -> SignalTrial:
    """
    执行完整预处理链，μ-law 逐元素最后执行

    Args:
        trial: 原始试验
        chain: 链名或自定义步骤列表
        mu: μ-law 常数，默认取 options.mu
        options: 默认参数
        compand: False 时只执行线性部分（滤波 + 去噪），不做 rescale 与 μ-law

    Returns:
        SignalTrial: 预处理后的试验，compand=True 时所有值位于 [-1, 1]
    """
    opts = options or DspOptions()
    steps = build_chain_steps(chain, opts)
    with timer.record("dsp.chain"):
        out = run_steps(trial, steps)
        if not compand:
            return out
        out = rescale_unit(out)
        return out.with_samples(mu_law(out.samples, opts.mu if mu is None else mu))


def preprocess_trials(
    trials: Sequence[SignalTrial],
    chain: Chain,
    mu: Optional[float] = None,
    *,
    options: Optional[DspOptions] = None,
    workers: int = 1,
) -> List[SignalTrial]:
    """
    对多个试验执行预处理链，workers > 1 时按试验并行，结果顺序与输入一致。
    """
    if workers <= 1 or len(trials) <= 1:
        return [preprocess_chain(t, chain, mu, options=options) for t in trials]

    logger.debug(f"Preprocessing {len(trials)} trials with {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(lambda t: preprocess_chain(t, chain, mu, options=options), trials))
