# -*- coding: utf-8 -*-
"""数据集：清单读写、分段、按试验划分、批迭代、合成数据与片段缓存。"""

from pipelines.emgttl.modules.dataset.archive import read_segment_archive, write_segment_archive
from pipelines.emgttl.modules.dataset.batching import batches, derive_seed, epoch_seed, stack_segments
from pipelines.emgttl.modules.dataset.manifest import (
    MANIFEST_FILENAME,
    DatasetManifest,
    TrialEntry,
    load_dataset,
    write_dataset,
)
from pipelines.emgttl.modules.dataset.segmentation import (
    Segment,
    SegmentationConfig,
    ShortTrialWarning,
    segment_count,
    segment_trial,
)
from pipelines.emgttl.modules.dataset.splits import SplitSpec, build_split, split_preset
from pipelines.emgttl.modules.dataset.synth import SynthSpec, synth_generate

__all__ = [
    "DatasetManifest",
    "TrialEntry",
    "MANIFEST_FILENAME",
    "load_dataset",
    "write_dataset",
    "Segment",
    "SegmentationConfig",
    "ShortTrialWarning",
    "segment_count",
    "segment_trial",
    "SplitSpec",
    "build_split",
    "split_preset",
    "SynthSpec",
    "synth_generate",
    "batches",
    "derive_seed",
    "epoch_seed",
    "stack_segments",
    "write_segment_archive",
    "read_segment_archive",
]
