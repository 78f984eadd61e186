# -*- coding: utf-8 -*-
"""
迁移学习：复制编码器权重，重新初始化分类头，再在目标任务上微调
"""

import logging
import statistics
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence

from pipelines.emgttl.errors import ConfigurationError, TransferError
from pipelines.emgttl.modules.autodiff import Parameter
from pipelines.emgttl.modules.model import HEAD_PREFIX, EMGTTLModel, ModelConfig, init_weights
from pipelines.emgttl.modules.trainer.checkpoint import Checkpoint
from pipelines.emgttl.modules.trainer.train_config import TrainConfig
from pipelines.emgttl.modules.trainer.trainer import TaskSegments, evaluate, train

logger = logging.getLogger(__name__)

TransferMode = Literal["head-only-reinit", "freeze-encoder"]
TRANSFER_MODES = ("head-only-reinit", "freeze-encoder")

GEOMETRY_FIELDS = (
    "channels",
    "window",
    "embed_dim",
    "num_layers",
    "num_heads",
    "encoder_hidden",
    "encoder_mlp_depth",
    "pos_embedding",
)

# 几何字段 -> 受影响的张量
_AFFECTED_TENSORS = {
    "channels": "embed.E",
    "window": "embed.E_pos",
    "embed_dim": "embed.E",
    "num_layers": "encoder.*",
    "num_heads": "attn.W_msa",
    "encoder_hidden": "mlp.fc1",
    "encoder_mlp_depth": "mlp.fc2",
    "pos_embedding": "embed.E_pos",
}


def geometry_mismatches(source: ModelConfig, target: ModelConfig) -> List[str]:
    return [name for name in GEOMETRY_FIELDS if getattr(source, name) != getattr(target, name)]


def transfer(
    pretrained: Checkpoint,
    new_num_classes: int,
    mode: TransferMode = "head-only-reinit",
    *,
    target_config: Optional[ModelConfig] = None,
    seed: int = 0,
) -> EMGTTLModel:
    """
    由预训练 checkpoint 构造目标任务模型

    Args:
        pretrained: 源 checkpoint
        new_num_classes: 目标类别数
        mode: head-only-reinit（全部参数继续训练）或 freeze-encoder（只训练分类头）
        target_config: 目标模型配置（可改变 head_hidden / dropout_p），默认沿用源配置
        seed: 新分类头的初始化种子

    Returns:
        EMGTTLModel: 非分类头张量与 checkpoint 逐比特相同

    Raises:
        TransferError: 编码器几何不一致（列出字段与受影响的张量）
        ConfigurationError: 未知模式，或 target_config 的类别数与 new_num_classes 不符
    """
    if mode not in TRANSFER_MODES:
        raise ConfigurationError(f"Unknown transfer mode '{mode}', expected one of {TRANSFER_MODES}")
    source = pretrained.config
    if target_config is None:
        target = source.replace(num_classes=new_num_classes)
    else:
        if target_config.num_classes != new_num_classes:
            raise ConfigurationError(
                f"target_config.num_classes={target_config.num_classes} disagrees with new_num_classes={new_num_classes}"
            )
        target = target_config

    mismatched = geometry_mismatches(source, target)
    if mismatched:
        details = ", ".join(
            f"{name}: {getattr(source, name)} -> {getattr(target, name)} ({_AFFECTED_TENSORS[name]})" for name in mismatched
        )
        raise TransferError(f"Cannot transfer checkpoint, encoder geometry differs: {details}", fields=mismatched)

    dtype = pretrained.dtype
    fresh = init_weights(target, seed=seed, dtype=dtype)
    params: "OrderedDict[str, Parameter]" = OrderedDict()
    for name, parameter in fresh.items():
        if name.startswith(HEAD_PREFIX):
            params[name] = parameter
        else:
            params[name] = Parameter(name, pretrained.weights[name].copy(), trainable=parameter.trainable, dtype=dtype)
            if mode == "freeze-encoder":
                params[name].trainable = False

    model = EMGTTLModel(target, params)
    frozen = sum(1 for p in model.parameters() if not p.trainable)
    logger.info(
        f"Transferred {len(model.encoder_names())} encoder tensors, head re-initialized for K={new_num_classes} "
        f"(mode={mode}, frozen tensors={frozen})"
    )
    return model


# ==================== 迁移对比实验 ====================

@dataclass
class TransferStudyRow:
    seed: int
    finetuned_accuracy: float
    scratch_accuracy: float


@dataclass
class TransferStudyResult:
    rows: List[TransferStudyRow] = field(default_factory=list)
    non_head_bit_exact: bool = True

    @property
    def median_finetuned(self) -> float:
        return statistics.median(r.finetuned_accuracy for r in self.rows)

    @property
    def median_scratch(self) -> float:
        return statistics.median(r.scratch_accuracy for r in self.rows)

    def summary(self) -> Dict[str, Any]:
        return {
            "seeds": [r.seed for r in self.rows],
            "median_finetuned_accuracy": self.median_finetuned,
            "median_scratch_accuracy": self.median_scratch,
            "non_head_bit_exact": self.non_head_bit_exact,
        }


def transfer_study(
    source: TaskSegments,
    target: TaskSegments,
    model_config: ModelConfig,
    seeds: Sequence[int],
    train_config: TrainConfig,
    *,
    mode: TransferMode = "head-only-reinit",
    lr_scale: float = 1.0 / 3.0,
    eval_batch_size: int = 256,
    workers: int = 1,
) -> TransferStudyResult:
    """
    每个种子：源任务预训练 -> 迁移到目标任务微调；同时以相同 epoch 预算从头训练目标任务作为基线

    Args:
        source / target: 源 / 目标任务片段（交换二者即得到反方向的迁移）
        model_config: 源模型配置（num_classes 取 source.num_classes）
        seeds: 种子列表
        train_config: 预训练与从头训练的超参数；微调学习率 = learning_rate × lr_scale
        mode: 迁移模式

    Returns:
        TransferStudyResult: 每个种子的微调 / 从头训练测试准确率
    """
    if not seeds:
        raise ConfigurationError("transfer_study needs at least one seed")
    if not target.test:
        raise ConfigurationError(f"Target task '{target.name}' has no test segments")
    source_config = model_config.replace(num_classes=source.num_classes)
    target_config = model_config.replace(num_classes=target.num_classes)

    result = TransferStudyResult()
    for seed in seeds:
        cfg = train_config.replace(seed=seed)
        pretrained_model = EMGTTLModel.initialize(source_config, seed=seed)
        pretrained, _ = train(
            pretrained_model, source.train, source.test, cfg,
            provenance={"dataset": source.name}, eval_batch_size=eval_batch_size, workers=workers,
        )

        finetuned = transfer(pretrained, target.num_classes, mode, target_config=target_config, seed=seed)
        encoder_names = finetuned.encoder_names()
        if finetuned.weights_hash(encoder_names) != pretrained.to_model().weights_hash(encoder_names):
            result.non_head_bit_exact = False
        train(
            finetuned, target.train, (), cfg.replace(learning_rate=cfg.learning_rate * lr_scale),
            provenance={"dataset": target.name, "source_checkpoint_sha256": pretrained.weights_hash()},
            eval_batch_size=eval_batch_size, workers=workers,
        )
        finetuned_accuracy = evaluate(finetuned, target.test, eval_batch_size, workers).accuracy

        scratch = EMGTTLModel.initialize(target_config, seed=seed)
        train(scratch, target.train, (), cfg, provenance={"dataset": target.name}, eval_batch_size=eval_batch_size, workers=workers)
        scratch_accuracy = evaluate(scratch, target.test, eval_batch_size, workers).accuracy

        logger.info(f"seed {seed}: finetuned={finetuned_accuracy:.4f} scratch={scratch_accuracy:.4f}")
        result.rows.append(TransferStudyRow(seed=seed, finetuned_accuracy=finetuned_accuracy, scratch_accuracy=scratch_accuracy))
    return result
