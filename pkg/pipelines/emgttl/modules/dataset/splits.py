# -*- coding: utf-8 -*-
"""
按试验编号划分训练 / 测试集
划分单位是整个试验，同一试验的窗口不会同时出现在两侧。
"""

import logging
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.dataset.manifest import DatasetManifest
from pipelines.emgttl.modules.dataset.segmentation import Segment, SegmentationConfig, segment_trial
from pipelines.emgttl.modules.signal_dsp.chain import Chain, DspOptions, preprocess_trials
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)

# config.yaml 缺失 presets 段时的回退值
_BUILTIN_SPLITS = {
    "db1-paper": {"train": [1, 3, 4, 6, 8, 9, 10], "test": [2, 5, 7]},
    "db4-paper": {"train": [1, 2, 3], "test": [4, 5]},
}

# 与预处理链同名的别名
SPLIT_ALIASES = {"db1-style": "db1-paper", "db4-style": "db4-paper"}


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    train_trial_ids: FrozenSet[int]
    test_trial_ids: FrozenSet[int]

    def check(self) -> None:
        overlap = self.train_trial_ids & self.test_trial_ids
        if overlap:
            raise ConfigurationError(f"Train and test splits overlap on trial ids {sorted(overlap)}")
        if not self.train_trial_ids:
            raise ConfigurationError("Train split is empty")


def split_preset(name: str, config: Optional[Dict[str, Any]] = None) -> SplitSpec:
    """
    按名称获取预设划分（"db1-paper" / "db4-paper"，或别名 "db1-style" / "db4-style"），
    优先读取 config.yaml 的 presets.splits。
    """
    name = SPLIT_ALIASES.get(name, name)
    presets = dict(_BUILTIN_SPLITS)
    presets.update(((config or {}).get("presets") or {}).get("splits") or {})
    if name not in presets:
        raise ConfigurationError(f"Unknown split preset '{name}', available: {sorted(set(presets) | set(SPLIT_ALIASES))}")
    preset = presets[name]
    return SplitSpec(train_trial_ids=frozenset(preset["train"]), test_trial_ids=frozenset(preset["test"]))


def build_split(
    manifest: DatasetManifest,
    trials: Sequence[SignalTrial],
    split: SplitSpec,
    cfg: SegmentationConfig,
    *,
    chain: Optional[Chain] = None,
    mu: Optional[float] = None,
    options: Optional[DspOptions] = None,
    workers: int = 1,
) -> Tuple[List[Segment], List[Segment]]:
    """
    预处理（可选）后分段，并按试验编号归入训练 / 测试集

    Args:
        manifest: 数据集清单
        trials: 与清单对应的原始试验
        split: 训练 / 测试试验编号
        cfg: 分段配置
        chain: 预处理链，None 表示 trials 已预处理
        mu: μ-law 常数
        options: 预处理默认参数
        workers: 预处理并行度

    Returns:
        (train segments, test segments)

    Raises:
        ConfigurationError: 划分重叠、引用清单中不存在的试验、窗口几何非法
    """
    split.check()
    cfg.resolve(manifest.sample_rate_hz, manifest.channels)

    known = set(manifest.trial_ids()) | {t.trial_id for t in trials}
    unknown = (split.train_trial_ids | split.test_trial_ids) - known
    if unknown:
        raise ConfigurationError(f"Split references trial ids {sorted(unknown)} not present in dataset '{manifest.name}' (has {sorted(known)})")

    used = [t for t in trials if t.trial_id in split.train_trial_ids or t.trial_id in split.test_trial_ids]
    if chain is not None:
        used = preprocess_trials(used, chain, mu, options=options, workers=workers)

    train, test = [], []
    for trial in used:
        target = train if trial.trial_id in split.train_trial_ids else test
        target.extend(segment_trial(trial, cfg))

    logger.info(
        f"Split '{manifest.name}': {len(train)} train / {len(test)} test segments "
        f"from trials {sorted(split.train_trial_ids)} / {sorted(split.test_trial_ids)}"
    )
    return train, test
