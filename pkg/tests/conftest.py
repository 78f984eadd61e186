# -*- coding: utf-8 -*-
"""
测试公共 fixture：tiny 模型配置、tmp_path 下的合成数据集、RunConfig 写入工具
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from pipelines.emgttl.modules.dataset import Segment, SynthSpec, synth_generate, write_dataset  # noqa: E402
from pipelines.emgttl.modules.model import ModelConfig  # noqa: E402

# 2000 Hz 下 4 ms / 2 ms -> W=8, S=4，与 tiny 配置的 C=2 兼容
TINY_SEGMENTATION = {"window_ms": 4.0, "step_ms": 2.0}
TINY_MODEL_SECTION = {
    "embed_dim": 8,
    "num_layers": 1,
    "encoder_hidden": 16,
    "num_heads": 2,
    "head_hidden": [8, 8],
    "dropout_p": 0.0,
}


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        channels=2, window=8, embed_dim=8, num_layers=1, num_heads=2,
        encoder_hidden=16, head_hidden=(8, 8), num_classes=3, dropout_p=0.0,
    )


def _random_segments(config: ModelConfig, count: int, seed: int = 0, trial_id: int = 1):
    rng = np.random.default_rng(seed)
    return [
        Segment(
            X=rng.uniform(-1.0, 1.0, size=(config.channels, config.window)),
            y=i % config.num_classes,
            subject_id="1",
            trial_id=trial_id,
            start=i,
        )
        for i in range(count)
    ]


@pytest.fixture
def make_segments():
    """随机片段工厂，标签循环覆盖全部类别：make_segments(config, count, seed=0)。"""
    return _random_segments


@pytest.fixture
def synth_dataset(tmp_path) -> Path:
    """3 类 × 3 次试验、2 通道、2000 Hz、0.1 s 的合成数据集，返回清单路径。"""
    spec = SynthSpec(num_classes=3, subjects=1, trials_per_class=3, duration_s=0.1, sample_rate_hz=2000.0, channels=2)
    manifest, trials = synth_generate(spec, seed=0)
    return write_dataset(manifest, trials, tmp_path / "data")


@pytest.fixture
def write_run_config(tmp_path):
    """
    写出 RunConfig JSON；默认使用 tiny 模型与 {train: [1, 2], test: [3]} 划分

    Usage:
        path = write_run_config(manifest, train={"epochs": 2})
    """

    def _write(manifest: Path, name: str = "run.json", **sections) -> Path:
        payload = {
            "dataset": {
                "manifest": str(manifest),
                "split": {"train": [1, 2], "test": [3]},
                "segmentation": dict(TINY_SEGMENTATION),
            },
            "preprocess": {"chain": "db1-style"},
            "model": dict(TINY_MODEL_SECTION),
            "train": {"learning_rate": 0.003, "batch_size": 64, "epochs": 1, "seed": 0},
        }
        for section, values in sections.items():
            payload.setdefault(section, {}).update(values)
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write
