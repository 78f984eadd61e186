# -*- coding: utf-8 -*-
"""
EMGTTL 管道
数据加载 -> 预处理 -> 分段 / 按试验划分 -> 训练 / 迁移微调 -> 评估 / 报告
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pipelines.base_pipeline import BasePipeline
from pipelines.emgttl.errors import ConfigurationError
from pipelines.emgttl.modules.autodiff import resolve_precision
from pipelines.emgttl.modules.dataset import (
    DatasetManifest,
    Segment,
    SegmentationConfig,
    build_split,
    load_dataset,
    read_segment_archive,
    write_segment_archive,
)
from pipelines.emgttl.modules.model import EMGTTLModel, ModelConfig
from pipelines.emgttl.modules.signal_dsp import DspOptions
from pipelines.emgttl.modules.trainer import (
    Checkpoint,
    EpochRecord,
    Metrics,
    TaskSegments,
    Trainer,
    TransferStudyResult,
    VariantEntry,
    VariantStudyRow,
    check_geometry,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    transfer,
    transfer_study,
    variant_study,
)
from pipelines.emgttl.schemas import RunConfig
from pipelines.emgttl.utils import report_utils
from tools.config_loader import load_config
from tools.hashing import get_file_sha256
from tools.timer import timer

logger = logging.getLogger(__name__)

SegmentPair = Tuple[List[Segment], List[Segment]]


@dataclass
class TrainOutcome:
    """
    train / finetune 的结果

    Attributes:
        checkpoint: 最终 checkpoint
        history: 每个 epoch 的指标
        metrics: 最终模型在评估集上的指标
        checkpoint_path / best_checkpoint_path: 写出的文件（未指定输出时为 None）
    """

    checkpoint: Checkpoint
    history: List[EpochRecord]
    metrics: Metrics
    checkpoint_path: Optional[Path] = None
    best_checkpoint_path: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.metrics.accuracy,
            "epochs": len(self.history),
            "weights_sha256": self.checkpoint.weights_hash(),
            "checkpoint": str(self.checkpoint_path) if self.checkpoint_path else None,
            "best_checkpoint": str(self.best_checkpoint_path) if self.best_checkpoint_path else None,
        }


class EMGTTLPipeline(BasePipeline):
    """
    单个 RunConfig 对应的一次作业

    Usage:
        pipeline = EMGTTLPipeline(load_run_config("run.json"))
        outcome = pipeline.train(out="model.ckpt")
    """

    def __init__(self, run_config: RunConfig, *, config: Optional[Dict[str, Any]] = None, workers: Optional[int] = None):
        super().__init__()
        self.pipeline_type = "emgttl"
        self.run_config = run_config
        self.config = config if config is not None else load_config()

        runtime = self.config.get("runtime", {}) or {}
        self.workers = int(workers or runtime.get("threads", 1))
        self.eval_batch_size = int(runtime.get("eval_batch_size", 256))
        self.dsp_options = self._build_dsp_options()

        self._dataset: Optional[Tuple[DatasetManifest, list]] = None
        self._segments: Dict[Tuple[float, float], SegmentPair] = {}

    def _build_dsp_options(self) -> DspOptions:
        preprocess = self.run_config.preprocess
        updates = {key: value for key, value in (("mu", preprocess.mu), ("db4_band", preprocess.db4_band)) if value is not None}
        return DspOptions.from_config(self.config).model_copy(update=updates)

    # ==================== 数据 ====================

    def load_data(self) -> Tuple[DatasetManifest, list]:
        """
        加载数据集（缓存）

        Raises:
            ConfigurationError: dataset.manifest 指向的文件不存在
            LoadError: 清单或试验文件损坏
        """
        if self._dataset is None:
            manifest_path = self.run_config.dataset.manifest
            try:
                self._require_file(manifest_path, "dataset.manifest")
            except FileNotFoundError as e:
                raise ConfigurationError(str(e)) from e
            self._log_step("load_data", manifest_path)
            self._dataset = load_dataset(manifest_path, workers=self.workers)
        return self._dataset

    @property
    def manifest(self) -> DatasetManifest:
        return self.load_data()[0]

    def _cache_key(self, segmentation: SegmentationConfig) -> str:
        dataset = self.run_config.dataset
        split = dataset.split_spec(self.config)
        payload = {
            "manifest_sha256": get_file_sha256(dataset.manifest),
            "chain": self.run_config.preprocess.chain,
            "dsp": self.dsp_options.model_dump(mode="json"),
            "segmentation": segmentation.model_dump(mode="json"),
            "train": sorted(split.train_trial_ids),
            "test": sorted(split.test_trial_ids),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    def _build_segments(self, segmentation: SegmentationConfig) -> SegmentPair:
        manifest, trials = self.load_data()
        return build_split(
            manifest,
            trials,
            self.run_config.dataset.split_spec(self.config),
            segmentation,
            chain=self.run_config.preprocess.chain,
            options=self.dsp_options,
            workers=self.workers,
        )

    def segments(self, segmentation: Optional[SegmentationConfig] = None) -> SegmentPair:
        """
        返回 (训练片段, 测试片段)，按窗口几何缓存；配置了 segment_cache_dir 时读写片段缓存文件
        """
        segmentation = segmentation or self.run_config.dataset.segmentation
        key = (segmentation.window_ms, segmentation.step_ms)
        if key in self._segments:
            return self._segments[key]

        cache_dir = self.run_config.dataset.segment_cache_dir
        if cache_dir is None:
            pair = self._build_segments(segmentation)
        else:
            self.load_data()
            stem = Path(cache_dir) / f"segments-{self._cache_key(segmentation)}"
            train_path, test_path = Path(f"{stem}.train.emgs"), Path(f"{stem}.test.emgs")
            if train_path.is_file() and test_path.is_file():
                self._log_step("segments", f"cache hit {stem}")
                pair = (read_segment_archive(train_path), read_segment_archive(test_path))
            else:
                pair = self._build_segments(segmentation)
                write_segment_archive(train_path, pair[0])
                write_segment_archive(test_path, pair[1])
                self._log_step("segments", f"cache written {stem}")

        self._segments[key] = pair
        return pair

    def eval_segments(self, pair: SegmentPair) -> List[Segment]:
        return pair[0] if self.run_config.dataset.eval_on == "train" else pair[1]

    def model_config(self, segmentation: Optional[SegmentationConfig] = None) -> ModelConfig:
        """由 model 段与数据集几何（C、W、K）组装 ModelConfig。"""
        manifest = self.manifest
        segmentation = segmentation or self.run_config.dataset.segmentation
        window, _ = segmentation.resolve(manifest.sample_rate_hz, manifest.channels)
        return self.run_config.model.resolve(manifest.channels, window, manifest.num_classes)

    def _provenance(self) -> Dict[str, Any]:
        return {
            "dataset": self.manifest.name,
            "manifest_sha256": get_file_sha256(self.run_config.dataset.manifest),
            "run_config": self.run_config.model_dump(mode="json"),
        }

    # ==================== 训练 ====================

    def _fit(self, model: EMGTTLModel, cfg, provenance: Dict[str, Any], out: Optional[Union[str, Path]]) -> TrainOutcome:
        pair = self.segments()
        eval_segments = self.eval_segments(pair)

        timer.reset()
        trainer = Trainer(model, cfg, provenance=provenance, eval_batch_size=self.eval_batch_size, workers=self.workers)
        self._log_step("train", f"{len(pair[0])} segments, {cfg.epochs} epochs, {model.param_count()} parameters")
        checkpoint, history = trainer.fit(pair[0], eval_segments)

        checkpoint_path = best_path = None
        if out is not None:
            checkpoint_path = save_checkpoint(checkpoint, out)
            report_utils.write_history(report_utils.history_path(checkpoint_path), history)
            if trainer.best_checkpoint is not None:
                best_path = save_checkpoint(trainer.best_checkpoint, report_utils.best_checkpoint_path(checkpoint_path))

        metrics = evaluate(model, eval_segments, self.eval_batch_size, self.workers)
        self._log_step("evaluate", f"accuracy={metrics.accuracy:.4f} on {metrics.total} {self.run_config.dataset.eval_on} segments")
        if timer.is_enabled():
            logger.log(logging.INFO if timer.console_output else logging.DEBUG, "\n" + timer.get_report_string())
            if checkpoint_path is not None:
                timer.save_report(str(report_utils.timer_report_path(checkpoint_path)))
        return TrainOutcome(checkpoint, history, metrics, checkpoint_path, best_path)

    def train(self, out: Optional[Union[str, Path]] = None) -> TrainOutcome:
        """
        从头训练

        Raises:
            ConfigurationError: 配置或几何非法（训练开始前）
            TrainingError: 非有限梯度
            UsageError: 评估集为空
        """
        self._log_step("config", self.run_config.to_json())
        model_config = self.model_config()
        cfg = self.run_config.train
        model = EMGTTLModel.initialize(model_config, seed=cfg.seed, dtype=resolve_precision(cfg.precision))
        return self._fit(model, cfg, self._provenance(), out)

    def run(self, **kwargs) -> dict:
        return self.train(out=kwargs.get("out")).to_dict()

    def _finetune_learning_rate(self, pretrained: Checkpoint) -> float:
        section = self.run_config.transfer
        if section.learning_rate is not None:
            return section.learning_rate
        source_cfg = pretrained.provenance.get("train_config") or {}
        base = float(source_cfg.get("learning_rate", self.run_config.train.learning_rate))
        return base * section.lr_scale

    def finetune(self, source: Optional[Union[str, Path]] = None, out: Optional[Union[str, Path]] = None) -> TrainOutcome:
        """
        加载预训练 checkpoint，重新初始化分类头后在本数据集上微调

        Raises:
            ConfigurationError: 未给出源 checkpoint
            LoadError: 源 checkpoint 缺失或损坏
            TransferError: 编码器几何不一致
        """
        self._log_step("config", self.run_config.to_json())
        source = source or self.run_config.transfer.source_checkpoint
        if source is None:
            raise ConfigurationError("transfer.source_checkpoint (or --from) is required for finetune")
        pretrained = load_checkpoint(source)

        manifest = self.manifest
        window, _ = self.run_config.dataset.segmentation.resolve(manifest.sample_rate_hz, manifest.channels)
        target_config = pretrained.config.replace(channels=manifest.channels, window=window, num_classes=manifest.num_classes)
        mode = self.run_config.transfer.mode
        cfg = self.run_config.train.replace(learning_rate=self._finetune_learning_rate(pretrained))
        model = transfer(pretrained, manifest.num_classes, mode, target_config=target_config, seed=cfg.seed)

        provenance = self._provenance()
        provenance.update(
            {
                "transfer_mode": mode,
                "source_checkpoint": str(source),
                "source_checkpoint_sha256": get_file_sha256(source),
                "source_weights_sha256": pretrained.weights_hash(),
                "source_provenance": pretrained.provenance,
            }
        )
        self._log_step("finetune", f"from {source} (mode={mode}, lr={cfg.learning_rate:g})")
        return self._fit(model, cfg, provenance, out)

    # ==================== 评估与报告 ====================

    def evaluate_checkpoint(self, path: Union[str, Path]) -> Metrics:
        """
        Raises:
            LoadError: checkpoint 缺失或损坏
            ConfigurationError: 片段几何与 checkpoint 不符
            UsageError: 评估集为空
        """
        self._log_step("config", self.run_config.to_json())
        model = load_checkpoint(path).to_model()
        segments = self.eval_segments(self.segments())
        check_geometry(model, segments, "eval")
        metrics = evaluate(model, segments, self.eval_batch_size, self.workers)
        self._log_step("evaluate", f"{path}: accuracy={metrics.accuracy:.4f} ({metrics.total} segments)")
        return metrics

    def report(
        self,
        variants: Sequence[Union[int, VariantEntry, dict]],
        seeds: Sequence[int],
        windows: Sequence[SegmentationConfig],
    ) -> List[VariantStudyRow]:
        """
        对每个 (变体, 窗口几何) 在 seeds 上训练并评估

        Raises:
            ConfigurationError: 种子少于 2 个（加载数据前检查）或变体配置非法
        """
        if len(seeds) < 2:
            raise ConfigurationError(f"need ≥ 2 seeds for a variant study, got {len(seeds)}")
        self._log_step("config", self.run_config.to_json())
        manifest = self.manifest
        return variant_study(
            variants,
            seeds,
            lambda window: (self.segments(window)[0], self.eval_segments(self.segments(window))),
            self.run_config.train,
            windows=windows,
            channels=manifest.channels,
            sample_rate_hz=manifest.sample_rate_hz,
            num_classes=manifest.num_classes,
            model_overrides=self.run_config.model.extra_fields(),
            eval_batch_size=self.eval_batch_size,
            workers=self.workers,
        )

    def task(self) -> TaskSegments:
        train_segments, test_segments = self.segments()
        manifest = self.manifest
        return TaskSegments(name=manifest.name, num_classes=manifest.num_classes, train=train_segments, test=test_segments)


def compare_transfer(source: EMGTTLPipeline, target: EMGTTLPipeline, seeds: Sequence[int]) -> TransferStudyResult:
    """
    迁移对比：source 预训练 -> target 微调，与 target 从头训练对比（交换参数得到反方向）

    模型结构、训练超参数与迁移模式取自 target 的 RunConfig
    """
    target._log_step("compare", f"{source.manifest.name} -> {target.manifest.name}, seeds {list(seeds)}")
    section = target.run_config.transfer
    return transfer_study(
        source.task(),
        target.task(),
        target.model_config(),
        seeds,
        target.run_config.train,
        mode=section.mode,
        lr_scale=section.lr_scale,
        eval_batch_size=target.eval_batch_size,
        workers=target.workers,
    )
