# -*- coding: utf-8 -*-
"""训练、评估、checkpoint、迁移学习与变体实验。"""

from pipelines.emgttl.modules.trainer.checkpoint import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
    weights_hash,
)
from pipelines.emgttl.modules.trainer.optimizer import ADAM_EPS, AdamState, adam_step
from pipelines.emgttl.modules.trainer.train_config import TrainConfig
from pipelines.emgttl.modules.trainer.trainer import (
    EpochRecord,
    Metrics,
    TaskSegments,
    Trainer,
    check_geometry,
    evaluate,
    train,
)
from pipelines.emgttl.modules.trainer.transfer import (
    GEOMETRY_FIELDS,
    TRANSFER_MODES,
    TransferStudyResult,
    TransferStudyRow,
    geometry_mismatches,
    transfer,
    transfer_study,
)
from pipelines.emgttl.modules.trainer.variant_study import (
    REPORT_COLUMNS,
    VariantEntry,
    VariantStudyRow,
    variant_study,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "ADAM_EPS",
    "adam_step",
    "Checkpoint",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "weights_hash",
    "Metrics",
    "EpochRecord",
    "TaskSegments",
    "Trainer",
    "check_geometry",
    "evaluate",
    "train",
    "TRANSFER_MODES",
    "GEOMETRY_FIELDS",
    "geometry_mismatches",
    "transfer",
    "transfer_study",
    "TransferStudyRow",
    "TransferStudyResult",
    "REPORT_COLUMNS",
    "VariantEntry",
    "VariantStudyRow",
    "variant_study",
]
