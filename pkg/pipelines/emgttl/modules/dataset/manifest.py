# -*- coding: utf-8 -*-
"""
数据集清单与原始试验文件读写

清单为 JSON，字段与 DatasetManifest 一致；类别列表顺序即标签索引。
试验文件为无文件头的小端 float32 原始二进制，通道优先排列
（通道 0 的 T 个采样，然后通道 1 ...），T = 字节数 / (4·C)。
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator

from pipelines.emgttl.errors import DataError, LoadError
from pipelines.emgttl.modules.signal_dsp.trial import SignalTrial

logger = logging.getLogger(__name__)

TRIAL_DTYPE = np.dtype("<f4")
MANIFEST_FILENAME = "manifest.json"


class TrialEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    file: str
    subject_id: str
    trial_id: int
    label: int = Field(validation_alias=AliasChoices("label", "class_index"))

    @field_validator("subject_id", mode="before")
    @classmethod
    def coerce_subject(cls, v):
        return str(v)


class DatasetManifest(BaseModel):
    """
    数据集清单

    Attributes:
        name: 数据集名
        channels: 通道数 C
        sample_rate_hz: 采样率
        classes: 有序类别名列表
        trials: 试验条目 {file, subject_id, trial_id, label}
    """

    model_config = ConfigDict(extra="forbid")

    name: str
    channels: PositiveInt
    sample_rate_hz: PositiveFloat
    classes: List[str]
    trials: List[TrialEntry] = Field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def trial_ids(self) -> List[int]:
        return sorted({entry.trial_id for entry in self.trials})


def _describe(entry: TrialEntry) -> str:
    return f"trial {entry.trial_id} (subject {entry.subject_id}, file {entry.file})"


def check_manifest(manifest: DatasetManifest) -> None:
    """
    Raises:
        LoadError: 标签越界，或 (subject, class) 内 trial_id 重复
    """
    seen = set()
    for entry in manifest.trials:
        if not 0 <= entry.label < manifest.num_classes:
            raise LoadError(
                f"Unknown class index {entry.label} for {_describe(entry)}; manifest has {manifest.num_classes} classes",
                path=entry.file,
            )
        key = (entry.subject_id, entry.label, entry.trial_id)
        if key in seen:
            raise LoadError(f"Duplicate trial id for {_describe(entry)} within class {entry.label}", path=entry.file)
        seen.add(key)


def read_trial_file(path: Path, entry: TrialEntry, manifest: DatasetManifest) -> SignalTrial:
    """读取单个原始试验文件并绑定元数据。"""
    if not path.is_file():
        raise LoadError(f"Trial file not found: {path} ({_describe(entry)})", path=str(path))
    size = path.stat().st_size
    row_bytes = TRIAL_DTYPE.itemsize * manifest.channels
    if size == 0 or size % row_bytes:
        raise LoadError(
            f"File size {size} of {path} is not a positive multiple of 4*C={row_bytes} bytes ({_describe(entry)})",
            path=str(path),
        )
    samples = np.fromfile(path, dtype=TRIAL_DTYPE).reshape(manifest.channels, size // row_bytes)
    try:
        return SignalTrial(
            samples=samples,
            sample_rate_hz=manifest.sample_rate_hz,
            subject_id=entry.subject_id,
            trial_id=entry.trial_id,
            label=entry.label,
        )
    except DataError as e:
        raise LoadError(f"Invalid samples in {path}: {e}", path=str(path)) from e


def load_dataset(manifest_path: Union[str, Path], workers: int = 1) -> Tuple[DatasetManifest, List[SignalTrial]]:
    """
    加载清单及其引用的全部试验文件

    Args:
        manifest_path: 清单 JSON 路径，试验文件路径相对清单所在目录解析
        workers: 并行读取的 worker 数

    Returns:
        (DatasetManifest, List[SignalTrial]): 清单与按清单顺序排列的试验

    Raises:
        LoadError: 清单不可解析、文件缺失、尺寸与 C 不一致、类别越界
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise LoadError(f"Manifest not found: {manifest_path}", path=str(manifest_path))
    try:
        manifest = DatasetManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise LoadError(f"Invalid manifest {manifest_path}: {e}", path=str(manifest_path)) from e
    check_manifest(manifest)

    root = manifest_path.parent
    jobs = [(root / entry.file, entry) for entry in manifest.trials]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            trials = list(executor.map(lambda job: read_trial_file(job[0], job[1], manifest), jobs))
    else:
        trials = [read_trial_file(path, entry, manifest) for path, entry in jobs]

    logger.info(f"Loaded dataset '{manifest.name}': {len(trials)} trials, C={manifest.channels}, fs={manifest.sample_rate_hz:g} Hz")
    return manifest, trials


def write_dataset(manifest: DatasetManifest, trials: Sequence[SignalTrial], out_dir: Union[str, Path]) -> Path:
    """
    将清单与试验写入目录（load_dataset 的逆操作）

    Returns:
        Path: 写出的清单路径
    """
    if len(trials) != len(manifest.trials):
        raise DataError(f"Manifest lists {len(manifest.trials)} trials but {len(trials)} were given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for entry, trial in zip(manifest.trials, trials):
        if trial.channels != manifest.channels:
            raise DataError(f"{_describe(entry)} has {trial.channels} channels, manifest declares {manifest.channels}")
        target = out_dir / entry.file
        target.parent.mkdir(parents=True, exist_ok=True)
        np.ascontiguousarray(trial.samples, dtype=TRIAL_DTYPE).tofile(target)

    manifest_path = out_dir / MANIFEST_FILENAME
    manifest_path.write_text(json.dumps(manifest.model_dump(), indent=2), encoding="utf-8")
    logger.info(f"Wrote {len(trials)} trials to {out_dir}")
    return manifest_path
