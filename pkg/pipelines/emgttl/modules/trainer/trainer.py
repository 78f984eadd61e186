# -*- coding: utf-8 -*-
"""
训练循环与评估
每个 epoch：打乱 -> 分批 -> 前向 -> 交叉熵 -> 反向 -> Adam；每个 epoch 结束后在评估集上计算准确率。
单上下文模式下（EMGTTL_THREADS=1）整个训练过程由 cfg.seed 逐比特确定。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from pipelines.emgttl.errors import ConfigurationError, UsageError
from pipelines.emgttl.evaluation.metrics import argmax_lowest, confusion_matrix
from pipelines.emgttl.modules.autodiff import Tape, backward, cross_entropy, resolve_precision
from pipelines.emgttl.modules.dataset import Segment, batches, derive_seed, epoch_seed
from pipelines.emgttl.modules.model import EMGTTLModel
from pipelines.emgttl.modules.trainer.checkpoint import Checkpoint
from pipelines.emgttl.modules.trainer.optimizer import AdamState, adam_step
from pipelines.emgttl.modules.trainer.train_config import TrainConfig
from tools.timer import timer

logger = logging.getLogger(__name__)

_DROPOUT_STREAM = 1


@dataclass
class Metrics:
    """
    Attributes:
        accuracy: 正确数 / 总数 = trace(confusion) / sum(confusion)
        mean_loss: 平均交叉熵
        confusion: [K, K]，行 = 真实类别，列 = 预测类别
        per_class_recall: 每类召回率，支持数为 0 的类别为 None
    """

    accuracy: float
    mean_loss: float
    confusion: np.ndarray
    per_class_recall: List[Optional[float]]

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @classmethod
    def from_confusion(cls, confusion: np.ndarray, loss_sum: float) -> "Metrics":
        total = int(confusion.sum())
        support = confusion.sum(axis=1)
        recall = [float(confusion[k, k] / support[k]) if support[k] else None for k in range(confusion.shape[0])]
        return cls(
            accuracy=float(np.trace(confusion)) / total,
            mean_loss=loss_sum / total,
            confusion=confusion,
            per_class_recall=recall,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "mean_loss": self.mean_loss,
            "confusion": self.confusion.tolist(),
            "per_class_recall": self.per_class_recall,
            "support": self.support.tolist(),
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_accuracy: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        record = {"epoch": self.epoch, "train_loss": self.train_loss}
        if self.eval_accuracy is not None:
            record["eval_accuracy"] = self.eval_accuracy
        return record


@dataclass
class TaskSegments:
    """一个分类任务的训练 / 测试片段。"""

    name: str
    num_classes: int
    train: List[Segment] = field(default_factory=list)
    test: List[Segment] = field(default_factory=list)


# ==================== 评估 ====================

def _evaluate_shard(model: EMGTTLModel, segments: Sequence[Segment], batch_size: int) -> Tuple[np.ndarray, float]:
    k = model.config.num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    loss_sum = 0.0
    for X, y in batches(segments, batch_size, shuffle_seed=None, dtype=model.dtype):
        logits = model.forward(X, training=False)
        loss_sum += cross_entropy(logits, y).item() * len(y)
        confusion += confusion_matrix(y, argmax_lowest(logits.data), k)
    return confusion, loss_sum


def evaluate(model: EMGTTLModel, segments: Sequence[Segment], batch_size: int = 256, workers: int = 1) -> Metrics:
    """
    推理模式评估，不修改任何权重或梯度

    Args:
        model: 模型
        segments: 非空片段列表
        batch_size: 推理批大小
        workers: > 1 时按片段分片并行，混淆矩阵相加合并

    Returns:
        Metrics

    Raises:
        UsageError: 空评估集
    """
    if not segments:
        raise UsageError("empty evaluation set")
    with timer.record("trainer.eval"):
        if workers <= 1 or len(segments) < 2:
            confusion, loss_sum = _evaluate_shard(model, segments, batch_size)
        else:
            shards = [list(chunk) for chunk in np.array_split(np.arange(len(segments)), min(workers, len(segments)))]
            with ThreadPoolExecutor(max_workers=len(shards)) as executor:
                parts = list(executor.map(lambda idx: _evaluate_shard(model, [segments[i] for i in idx], batch_size), shards))
            confusion = sum(part[0] for part in parts)
            loss_sum = float(sum(part[1] for part in parts))
    return Metrics.from_confusion(confusion, loss_sum)


# ==================== 训练 ====================

def check_geometry(model: EMGTTLModel, segments: Sequence[Segment], role: str) -> None:
    """
    Raises:
        ConfigurationError: 片段形状或标签与模型不符
    """
    cfg = model.config
    for seg in segments:
        if seg.X.shape != (cfg.channels, cfg.window):
            raise ConfigurationError(
                f"{role} segment shape {seg.X.shape} does not match model C={cfg.channels}, W={cfg.window}"
            )
        if not 0 <= seg.y < cfg.num_classes:
            raise ConfigurationError(f"{role} segment label {seg.y} outside model's {cfg.num_classes} classes")


class Trainer:
    """
    单个训练任务（独占模型与优化器状态）

    Attributes:
        history: 每个 epoch 的 EpochRecord
        best_checkpoint: 评估准确率最高的 epoch 的快照（无评估集时为 None）
    """

    def __init__(
        self,
        model: EMGTTLModel,
        cfg: TrainConfig,
        *,
        provenance: Optional[Dict[str, Any]] = None,
        state: Optional[AdamState] = None,
        eval_batch_size: int = 256,
        workers: int = 1,
    ):
        self.model = model
        self.cfg = cfg
        self.provenance = dict(provenance or {})
        self.state = state or AdamState()
        self.eval_batch_size = eval_batch_size
        self.workers = workers
        self.history: List[EpochRecord] = []
        self.best_checkpoint: Optional[Checkpoint] = None
        self.best_accuracy: Optional[float] = None
        self.logger = logging.getLogger(self.__class__.__name__)

    def _align_precision(self) -> None:
        dtype = resolve_precision(self.cfg.precision)
        if self.model.dtype != dtype:
            self.logger.info(f"Casting model parameters from {self.model.dtype} to {np.dtype(dtype)}")
            for p in self.model.parameters():
                p.data = p.data.astype(dtype)
                p.zero_grad()
            self.state = AdamState()

    def train_step(self, X: np.ndarray, y: np.ndarray, dropout_seed: int) -> float:
        """一次前向 + 反向 + Adam 更新，返回批平均损失。"""
        self.model.zero_grad()
        with Tape():
            with timer.record("trainer.forward"):
                loss = cross_entropy(self.model.forward(X, training=True, seed=dropout_seed), y)
        with timer.record("trainer.backward"):
            grads = backward(loss)
        with timer.record("trainer.optimizer"):
            adam_step(self.model.trainable_parameters(), grads, self.state, self.cfg)
        return loss.item()

    def _snapshot(self, epochs_done: int) -> Checkpoint:
        provenance = dict(self.provenance)
        provenance.update(
            {
                "epochs": epochs_done,
                "seed": self.cfg.seed,
                "train_config": self.cfg.model_dump(mode="json"),
                "history": [record.to_dict() for record in self.history],
            }
        )
        return Checkpoint.from_model(self.model, provenance=provenance, optimizer=self.state)

    def fit(self, train_segments: Sequence[Segment], eval_segments: Sequence[Segment] = ()) -> Tuple[Checkpoint, List[EpochRecord]]:
        """
        执行完整的 epoch 预算

        Returns:
            (最终 Checkpoint, 指标历史)

        Raises:
            ConfigurationError: 训练集为空或片段几何与模型不符（在第一步之前）
            TrainingError: 出现非有限梯度
        """
        if not train_segments:
            raise ConfigurationError("No training segments")
        check_geometry(self.model, train_segments, "train")
        check_geometry(self.model, eval_segments, "eval")
        self._align_precision()
        dtype = self.model.dtype

        step = self.state.t
        for epoch in range(1, self.cfg.epochs + 1):
            with timer.record("trainer.epoch"):
                loss_sum, count = 0.0, 0
                for X, y in batches(train_segments, self.cfg.batch_size, epoch_seed(self.cfg.seed, epoch), dtype=dtype):
                    step += 1
                    loss_sum += self.train_step(X, y, derive_seed(self.cfg.seed, _DROPOUT_STREAM, step)) * len(y)
                    count += len(y)

                record = EpochRecord(epoch=epoch, train_loss=loss_sum / count)
                if eval_segments:
                    record.eval_accuracy = evaluate(self.model, eval_segments, self.eval_batch_size, self.workers).accuracy
                self.history.append(record)

            if record.eval_accuracy is not None and (self.best_accuracy is None or record.eval_accuracy > self.best_accuracy):
                self.best_accuracy = record.eval_accuracy
                self.best_checkpoint = self._snapshot(epoch)

            accuracy = f"{record.eval_accuracy:.4f}" if record.eval_accuracy is not None else "n/a"
            self.logger.info(f"epoch {epoch}/{self.cfg.epochs}: train_loss={record.train_loss:.5f} eval_accuracy={accuracy}")

        return self._snapshot(self.cfg.epochs), list(self.history)


def train(
    model: EMGTTLModel,
    train_segments: Sequence[Segment],
    eval_segments: Sequence[Segment],
    cfg: TrainConfig,
    **kwargs,
) -> Tuple[Checkpoint, List[EpochRecord]]:
    """Trainer(model, cfg, **kwargs).fit(train_segments, eval_segments) 的简写。"""
    return Trainer(model, cfg, **kwargs).fit(train_segments, eval_segments)
