# -*- coding: utf-8 -*-
"""
报告输出工具
指标历史（NDJSON）、变体实验表（CSV）、迁移对比表（CSV）与评估指标（JSON）
"""

import csv
import json
import logging
from pathlib import Path
from typing import IO, Any, Dict, Iterable, Sequence, Union

from pipelines.emgttl.modules.trainer import REPORT_COLUMNS, EpochRecord, Metrics, TransferStudyResult, VariantStudyRow

logger = logging.getLogger(__name__)

TRANSFER_COLUMNS = ("seed", "finetuned_accuracy", "scratch_accuracy")


def history_path(checkpoint_path: Union[str, Path]) -> Path:
    """checkpoint 旁的指标历史文件：<ckpt>.history.ndjson"""
    path = Path(checkpoint_path)
    return path.with_name(path.name + ".history.ndjson")


def best_checkpoint_path(checkpoint_path: Union[str, Path]) -> Path:
    """最佳评估 epoch 的 checkpoint：<stem>.best<suffix>"""
    path = Path(checkpoint_path)
    return path.with_name(f"{path.stem}.best{path.suffix}")


def timer_report_path(checkpoint_path: Union[str, Path]) -> Path:
    """训练耗时报告：<ckpt>.timer.txt"""
    path = Path(checkpoint_path)
    return path.with_name(path.name + ".timer.txt")


def write_history(path: Union[str, Path], history: Iterable[EpochRecord]) -> Path:
    """每个 epoch 一行 JSON。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in history:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    logger.info(f"Metric history saved to: {path}")
    return path


def read_history(path: Union[str, Path]) -> list:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def metrics_json(metrics: Metrics, extra: Dict[str, Any] = None) -> str:
    payload = metrics.to_dict()
    payload.update(extra or {})
    return json.dumps(payload, sort_keys=True)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_variant_csv(stream: IO[str], rows: Sequence[VariantStudyRow]) -> None:
    """variant_id,window_ms,mean_accuracy,std_accuracy,param_count"""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(v) for v in row.to_row()])


def write_transfer_csv(stream: IO[str], result: TransferStudyResult) -> None:
    """seed,finetuned_accuracy,scratch_accuracy，每个种子一行。"""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRANSFER_COLUMNS)
    for row in result.rows:
        writer.writerow([row.seed, _fmt(row.finetuned_accuracy), _fmt(row.scratch_accuracy)])


def write_csv_file(path: Union[str, Path], write_fn, payload) -> Path:
    """将 write_variant_csv / write_transfer_csv 的输出写入文件。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        write_fn(f, payload)
    logger.info(f"Report saved to: {path}")
    return path
