# -*- coding: utf-8 -*-
"""信号预处理：IIR 滤波、小波去噪、幅值归一化与 μ-law 压扩。"""

from pipelines.emgttl.modules.signal_dsp.chain import (
    NAMED_CHAINS,
    DspOptions,
    build_chain_steps,
    parse_step,
    preprocess_chain,
    preprocess_trials,
    run_steps,
)
from pipelines.emgttl.modules.signal_dsp.companding import inverse_mu_law, mu_law, rescale_unit
from pipelines.emgttl.modules.signal_dsp.denoise import DenoiseSpec, universal_threshold, wavelet_denoise
from pipelines.emgttl.modules.signal_dsp.filters import FilterSpec, apply_filter, design_sos, response_db
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

__all__ = [
    "SignalTrial",
    "FilterSpec",
    "DenoiseSpec",
    "DspOptions",
    "NAMED_CHAINS",
    "apply_filter",
    "design_sos",
    "response_db",
    "wavelet_denoise",
    "universal_threshold",
    "rescale_unit",
    "mu_law",
    "inverse_mu_law",
    "build_chain_steps",
    "parse_step",
    "run_steps",
    "preprocess_chain",
    "preprocess_trials",
]
