"""
EMGTTL 报告工具函数
"""

from .report_utils import (
    best_checkpoint_path,
    history_path,
    metrics_json,
    read_history,
    write_csv_file,
    write_history,
    write_transfer_csv,
    write_variant_csv,
)

__all__ = [
    "best_checkpoint_path",
    "history_path",
    "metrics_json",
    "read_history",
    "write_csv_file",
    "write_history",
    "write_transfer_csv",
    "write_variant_csv",
]
