# -*- coding: utf-8 -*-
"""
不变量校验套件（cmd_verify）

    gradcheck     每个可微算子与 tiny 配置整模型的有限差分梯度检验（64 位）
    mulaw         μ-law 奇对称、单调、端点、逆变换往返
    dsp           陷波 / 高低通转角 / 线性 / 零相位 / 小波去噪 / 预处理链
    segmentation  分段计数公式 vs 朴素枚举、典型几何
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from pipelines.emgttl.evaluation import metrics
from pipelines.emgttl.modules import autodiff as ad
from pipelines.emgttl.modules.dataset import SegmentationConfig, segment_count, segment_trial
from pipelines.emgttl.modules.model import EMGTTLModel, ModelConfig
from pipelines.emgttl.modules.signal_dsp import (
    DenoiseSpec,
    FilterSpec,
    SignalTrial,
    apply_filter,
    inverse_mu_law,
    mu_law,
    preprocess_chain,
    response_db,
    wavelet_denoise,
)

logger = logging.getLogger(__name__)

GRAD_TOLERANCE = 1e-4
SUITES = ("gradcheck", "mulaw", "dsp", "segmentation")

TINY_CONFIG = ModelConfig(
    channels=2, window=8, embed_dim=8, num_layers=1, num_heads=2,
    encoder_hidden=16, head_hidden=(8, 8), num_classes=3, dropout_p=0.0,
)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""
    elapsed_s: float = 0.0

    def to_dict(self) -> Dict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed, "detail": self.detail, "elapsed_s": self.elapsed_s}


def _check(suite: str, name: str, fn: Callable[[], tuple]) -> CheckResult:
    """fn 返回 (passed, detail)；异常计为失败。"""
    start = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as e:
        logger.debug(f"{suite}/{name} raised", exc_info=True)
        passed, detail = False, f"{type(e).__name__}: {e}"
    result = CheckResult(suite, name, bool(passed), detail, time.perf_counter() - start)
    logger.log(logging.INFO if result.passed else logging.ERROR, f"[{suite}] {name}: {'ok' if passed else 'FAIL'} {detail}")
    return result


# ==================== gradcheck ====================

def _leaf(rng: np.random.Generator, shape, name: str, positive: bool = False) -> ad.Tensor:
    data = rng.uniform(0.5, 1.5, size=shape) if positive else rng.standard_normal(shape)
    return ad.Tensor(data, requires_grad=True, name=name, dtype=np.float64)


def _projected(out: ad.Tensor, rng: np.random.Generator) -> Callable[[ad.Tensor], ad.Tensor]:
    weights = ad.Tensor(rng.standard_normal(out.shape), dtype=np.float64)
    return lambda y: ad.sum_(ad.mul(y, weights))


def _op_cases() -> Dict[str, Callable[[np.random.Generator], tuple]]:
    """每个用例返回 (构图函数, 输入列表)；构图函数输出任意形状，内部投影为标量。"""

    def case(build, *leaves):
        probe = build()
        project = _projected(probe, np.random.default_rng(probe.size))
        return (lambda: project(build())), list(leaves)

    def add(rng):
        a, b = _leaf(rng, (3, 4), "a"), _leaf(rng, (4,), "b")
        return case(lambda: ad.add(a, b), a, b)

    def sub(rng):
        a, b = _leaf(rng, (2, 3, 4), "a"), _leaf(rng, (3, 4), "b")
        return case(lambda: ad.sub(a, b), a, b)

    def mul(rng):
        a, b = _leaf(rng, (3, 4), "a"), _leaf(rng, (3, 4), "b")
        return case(lambda: ad.mul(a, b), a, b)

    def scale(rng):
        a = _leaf(rng, (5,), "a")
        return case(lambda: ad.scale(a, -2.5), a)

    def gelu(rng):
        a = _leaf(rng, (4, 5), "a")
        return case(lambda: ad.gelu(a), a)

    def mean(rng):
        a = _leaf(rng, (3, 4), "a")
        return case(lambda: ad.mean(a, axis=1), a)

    def matmul(rng):
        a, b = _leaf(rng, (3, 4), "a"), _leaf(rng, (4, 2), "b")
        return case(lambda: ad.matmul(a, b), a, b)

    def matmul_batched(rng):
        a, b = _leaf(rng, (2, 3, 4), "a"), _leaf(rng, (2, 4, 3), "b")
        return case(lambda: ad.matmul(a, b), a, b)

    def softmax(rng):
        a = _leaf(rng, (3, 5), "a")
        return case(lambda: ad.softmax(a, axis=-1), a)

    def layer_norm(rng):
        x, g, b = _leaf(rng, (3, 8), "x"), _leaf(rng, (8,), "gain", positive=True), _leaf(rng, (8,), "bias")
        return case(lambda: ad.layer_norm(x, g, b), x, g, b)

    def cross_entropy(rng):
        logits = _leaf(rng, (4, 6), "logits")
        labels = rng.integers(0, 6, size=4)
        return (lambda: ad.cross_entropy(logits, labels)), [logits]

    def concat(rng):
        a, b = _leaf(rng, (2, 3), "a"), _leaf(rng, (1, 3), "b")
        return case(lambda: ad.concat([a, b], axis=0), a, b)

    def slice_(rng):
        a = _leaf(rng, (4, 5), "a")
        return case(lambda: ad.slice_(a, (slice(1, 3), 0)), a)

    def reshape(rng):
        a = _leaf(rng, (2, 6), "a")
        return case(lambda: ad.reshape(a, (3, 4)), a)

    def transpose(rng):
        a = _leaf(rng, (2, 3, 4), "a")
        return case(lambda: ad.transpose(a, (0, 2, 1)), a)

    def expand(rng):
        a = _leaf(rng, (1, 4), "a")
        return case(lambda: ad.expand(a, (3,)), a)

    def add_embedding(rng):
        z, table = _leaf(rng, (2, 3, 4), "z"), _leaf(rng, (3, 4), "table")
        return case(lambda: ad.add_embedding(z, table), z, table)

    def dropout(rng):
        a = _leaf(rng, (4, 4), "a")
        mask_seed = int(rng.integers(0, 2 ** 31))
        return case(lambda: ad.dropout(a, 0.3, training=True, seed=mask_seed), a)

    return {fn.__name__: fn for fn in (
        add, sub, mul, scale, gelu, mean, matmul, matmul_batched, softmax, layer_norm,
        cross_entropy, concat, slice_, reshape, transpose, expand, add_embedding, dropout,
    )}


def model_gradcheck(config: ModelConfig = TINY_CONFIG, seed: int = 0) -> List[ad.GradCheckResult]:
    """tiny 配置整模型对全部参数做梯度检验（64 位，推理模式前向）。"""
    rng = np.random.default_rng(seed)
    model = EMGTTLModel.initialize(config, seed=seed, dtype=np.float64)
    # 放大初始化，使注意力与各层梯度显著非零
    for p in model.parameters():
        if p.trainable and p.ndim == 2:
            p.data = p.data * 20.0
    X = rng.uniform(-1.0, 1.0, size=(3, config.channels, config.window))
    y = rng.integers(0, config.num_classes, size=3)
    return ad.gradcheck(lambda: ad.cross_entropy(model.forward(X, training=False), y), model.parameters(), tol=GRAD_TOLERANCE)


def run_gradcheck_suite(seed: int = 0, trials: int = 10) -> List[CheckResult]:
    results = []
    with ad.precision("float64"):
        for name, make_case in _op_cases().items():
            def check(make_case=make_case):
                worst = 0.0
                for trial in range(trials):
                    fn, inputs = make_case(np.random.default_rng([seed, trial]))
                    worst = max(worst, max(r.max_rel_error for r in ad.gradcheck(fn, inputs, tol=GRAD_TOLERANCE)))
                return worst < GRAD_TOLERANCE, f"max rel err {worst:.2e} over {trials} inputs"

            results.append(_check("gradcheck", name, check))

        def full_model():
            checks = model_gradcheck(seed=seed)
            worst = max(checks, key=lambda r: r.max_rel_error)
            return all(r.passed for r in checks), f"{len(checks)} tensors, worst {worst.name} {worst.max_rel_error:.2e}"

        results.append(_check("gradcheck", "tiny_model", full_model))
    return results


# ==================== mulaw ====================

def run_mulaw_suite(mu: float = 255.0, points: int = 100_001) -> List[CheckResult]:
    grid = np.linspace(-1.0, 1.0, points)
    y = mu_law(grid, mu)

    checks = {
        "odd_symmetry": lambda: (np.allclose(mu_law(-grid, mu), -y, rtol=0, atol=1e-15), "F(-x) = -F(x)"),
        "strictly_increasing": lambda: (bool(np.all(np.diff(y) > 0)), f"min step {np.min(np.diff(y)):.2e}"),
        "bounded": lambda: (bool(np.all(np.abs(y) <= 1.0)), f"max |F| {np.max(np.abs(y)):.17g}"),
        "endpoints": lambda: (
            mu_law(0.0, mu) == 0.0 and math.isclose(mu_law(1.0, mu), 1.0) and math.isclose(mu_law(-1.0, mu), -1.0),
            "F(0)=0, F(±1)=±1",
        ),
        "inverse_round_trip": lambda: (
            float(np.max(np.abs(inverse_mu_law(y, mu) - grid))) < 1e-9,
            f"max err {float(np.max(np.abs(inverse_mu_law(y, mu) - grid))):.2e}",
        ),
    }
    return [_check("mulaw", name, fn) for name, fn in checks.items()]


# ==================== dsp ====================

def _sine(freq_hz: float, rate: float, seconds: float, channels: int = 1) -> SignalTrial:
    t = np.arange(int(rate * seconds)) / rate
    return SignalTrial(samples=np.tile(np.sin(2.0 * np.pi * freq_hz * t), (channels, 1)), sample_rate_hz=rate)


def _polynomial(length: int = 1024) -> np.ndarray:
    t = np.linspace(0.0, 1.0, length)
    return 1.0 + 2.0 * t - 3.0 * t ** 2 + 0.5 * t ** 3


def notch_attenuation_db(freq_hz: float, rate: float = 4000.0, seconds: float = 10.0) -> float:
    trial = _sine(freq_hz, rate, seconds)
    out = apply_filter(trial, FilterSpec(kind="notch", freq_hz=50.0, q_factor=35.0))
    return metrics.gain_db(metrics.middle(trial.samples), metrics.middle(out.samples))


def linearity_error(spec: FilterSpec, seed: int = 0, rate: float = 4000.0) -> float:
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 2, 4000))
    a, b = rng.uniform(-2.0, 2.0, size=2)

    def run(samples):
        return apply_filter(SignalTrial(samples=samples, sample_rate_hz=rate), spec).samples

    combined = run(a * x + b * y)
    separate = a * run(x) + b * run(y)
    return float(np.max(np.abs(combined - separate)) / max(np.max(np.abs(separate)), 1e-300))


def denoise_improvement(seeds: int = 20, sigma: float = 0.1) -> List[float]:
    """每个种子返回 (输入 RMS 误差 - 去噪后 RMS 误差)。"""
    clean = _polynomial() + 0.5 * np.sin(2.0 * np.pi * 3.0 * np.linspace(0.0, 1.0, 1024))
    spec = DenoiseSpec(wavelet="db4", levels=4)
    gains = []
    for seed in range(seeds):
        noisy = clean + sigma * np.random.default_rng(seed).standard_normal(clean.shape)
        out = wavelet_denoise(SignalTrial(samples=noisy[None, :], sample_rate_hz=1000.0), spec).samples[0]
        gains.append(metrics.rms(noisy - clean) - metrics.rms(out - clean))
    return gains


def chain_mains_suppression_db(seconds: float = 60.0, rate: float = 4000.0, seed: int = 0) -> float:
    """
    db1-style 链线性部分（陷波 -> 低通 -> 去噪）作用于白噪声后，50 Hz 谱密度相对 100 Hz 附近频带的抑制量（dB）。
    """
    noise = np.random.default_rng(seed).standard_normal((1, int(seconds * rate)))
    out = preprocess_chain(SignalTrial(samples=noise, sample_rate_hz=rate), "db1-style", compand=False)
    freqs, psd = metrics.welch_psd(out.samples[0], rate, nperseg=65536)
    return metrics.band_level_db(freqs, psd, 95.0, 105.0) - metrics.bin_level_db(freqs, psd, 50.0)


def run_dsp_suite(seed: int = 0) -> List[CheckResult]:
    rate = 4000.0
    notch = FilterSpec(kind="notch", freq_hz=50.0, q_factor=35.0)
    lowpass = FilterSpec(kind="lowpass", freq_hz=500.0, order=4)
    highpass = FilterSpec(kind="highpass", freq_hz=20.0, order=4)

    def notch_rejects_50():
        measured = notch_attenuation_db(50.0)
        reference = float(response_db(notch, rate, 50.0)[0])
        return measured <= -30.0 and reference <= -30.0, f"measured {measured:.1f} dB, response {reference:.1f} dB"

    def notch_passes_10():
        measured = notch_attenuation_db(10.0)
        return abs(measured) <= 1.0, f"measured {measured:.3f} dB"

    def notch_dc():
        trial = SignalTrial(samples=np.full((1, 8000), 3.0), sample_rate_hz=rate)
        out = apply_filter(trial, notch).samples
        err = float(np.max(np.abs(metrics.middle(out) - 3.0)) / 3.0)
        return err <= 1e-6, f"max rel dev {err:.2e}"

    def corners():
        details, ok = [], True
        for spec in (lowpass, highpass):
            single = spec.model_copy(update={"zero_phase": False})
            at_cutoff = float(response_db(single, rate, spec.freq_hz)[0])
            trial = _sine(spec.freq_hz, rate, 10.0)
            measured = metrics.gain_db(metrics.middle(trial.samples), metrics.middle(apply_filter(trial, single).samples))
            ok &= abs(at_cutoff + 3.0103) <= 0.1 and abs(measured + 3.0103) <= 0.5
            details.append(f"{spec.kind} {at_cutoff:.2f}/{measured:.2f} dB")
        return ok, ", ".join(details)

    def linearity():
        specs = (notch, lowpass, highpass, FilterSpec(kind="bandstop", freq_hz=50.0), lowpass.model_copy(update={"zero_phase": False}))
        worst = max(linearity_error(s, seed) for s in specs)
        return worst <= 1e-6, f"max rel err {worst:.2e}"

    def zero_phase():
        trial = _sine(10.0, rate, 4.0)
        out = apply_filter(trial, lowpass)
        lag = metrics.peak_lag(metrics.middle(trial.samples[0]), metrics.middle(out.samples[0]))
        return lag == 0, f"peak lag {lag}"

    def denoise_zero():
        out = wavelet_denoise(SignalTrial(samples=np.zeros((2, 1024)), sample_rate_hz=1000.0), DenoiseSpec())
        return bool(np.all(out.samples == 0.0)), "zero in, zero out"

    def denoise_polynomial():
        clean = _polynomial()
        out = wavelet_denoise(SignalTrial(samples=clean[None, :], sample_rate_hz=1000.0), DenoiseSpec()).samples[0]
        rel = metrics.rms(out - clean) / metrics.rms(clean)
        return rel <= 0.01, f"rel RMS err {rel:.2e}"

    def denoise_noisy():
        gains = denoise_improvement()
        return all(g > 0 for g in gains), f"min improvement {min(gains):.4f} over {len(gains)} seeds"

    def chain_zero():
        zero = SignalTrial(samples=np.zeros((2, 8000)), sample_rate_hz=rate)
        ok = all(np.all(preprocess_chain(zero, chain).samples == 0.0) for chain in ("db1-style", "db4-style"))
        return ok, "both chains"

    def chain_mains():
        suppression = chain_mains_suppression_db(seed=seed)
        return suppression >= 20.0, f"50 Hz suppressed {suppression:.1f} dB vs 100 Hz band"

    checks = {
        "notch_rejects_50hz": notch_rejects_50,
        "notch_passes_10hz": notch_passes_10,
        "notch_dc_unit_gain": notch_dc,
        "corner_frequencies": corners,
        "linearity": linearity,
        "zero_phase_lag": zero_phase,
        "denoise_zero": denoise_zero,
        "denoise_polynomial": denoise_polynomial,
        "denoise_noisy_polynomial": denoise_noisy,
        "chain_zero_signal": chain_zero,
        "chain_mains_suppression": chain_mains,
    }
    return [_check("dsp", name, fn) for name, fn in checks.items()]


# ==================== segmentation ====================

def naive_segment_count(length: int, window: int, step: int) -> int:
    count, start = 0, 0
    while start + window <= length:
        count += 1
        start += step
    return count


def run_segmentation_suite(seed: int = 0, cases: int = 1000) -> List[CheckResult]:
    def formula():
        rng = np.random.default_rng(seed)
        for _ in range(cases):
            step = int(rng.integers(1, 50))
            window = int(rng.integers(step, 200))
            length = int(rng.integers(window, 2000))
            if segment_count(length, window, step) != naive_segment_count(length, window, step):
                return False, f"mismatch at T={length}, W={window}, S={step}"
        return True, f"{cases} cases"

    def reference_geometries():
        trial = SignalTrial(samples=np.zeros((5, 40000)), sample_rate_hz=4000.0)
        long_windows = len(segment_trial(trial, SegmentationConfig(window_ms=500.0, step_ms=250.0)))
        short_windows = len(segment_trial(trial, SegmentationConfig(window_ms=250.0, step_ms=100.0)))
        return (long_windows, short_windows) == (39, 98), f"k={long_windows} (500/250 ms), k={short_windows} (250/100 ms)"

    def coverage():
        trial = SignalTrial(samples=np.arange(5 * 1037, dtype=np.float64).reshape(5, 1037), sample_rate_hz=1000.0)
        segments = segment_trial(trial, SegmentationConfig(window_ms=100.0, step_ms=30.0))
        ok = all(s.start + 100 <= 1037 and np.array_equal(s.X, trial.samples[:, s.start : s.start + 100]) for s in segments)
        return ok, f"{len(segments)} segments within bounds"

    checks = {"count_formula": formula, "reference_geometries": reference_geometries, "coverage": coverage}
    return [_check("segmentation", name, fn) for name, fn in checks.items()]


_RUNNERS = {
    "gradcheck": run_gradcheck_suite,
    "mulaw": run_mulaw_suite,
    "dsp": run_dsp_suite,
    "segmentation": run_segmentation_suite,
}


def run_suites(names: Sequence[str]) -> List[CheckResult]:
    """按名称执行套件；"all" 展开为全部套件。"""
    selected = list(SUITES) if "all" in names else list(names)
    results = []
    for name in selected:
        if name not in _RUNNERS:
            raise ValueError(f"Unknown verify suite '{name}', expected one of {SUITES + ('all',)}")
        results.extend(_RUNNERS[name]())
    return results
