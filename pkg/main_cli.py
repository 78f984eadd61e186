# -*- coding: utf-8 -*-
"""
CLI 入口
子命令：synth / train / finetune / eval / report / compare / verify

退出码：
    0  成功
    1  运行时错误（训练失败、checkpoint 损坏、迁移几何不符、校验未通过等）
    2  用法或配置错误（argparse、ConfigurationError、pydantic.ValidationError）

stdout 只输出机器可读结果（accuracy=<float>、指标 JSON、CSV），诊断信息一律写 stderr。
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from pipelines.emgttl.emgttl_pipeline import EMGTTLPipeline, compare_transfer
from pipelines.emgttl.errors import ConfigurationError, EMGTTLError
from pipelines.emgttl.evaluation import verify
from pipelines.emgttl.modules.autodiff import set_debug
from pipelines.emgttl.modules.dataset import SegmentationConfig, SynthSpec, synth_generate, write_dataset
from pipelines.emgttl.schemas import load_run_config
from pipelines.emgttl.utils import report_utils
from tools.config_loader import load_config
from tools.timer import configure_from_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _seed_list(base: int, count: int) -> List[int]:
    return [base + i for i in range(count)]


def setup_logging(config: dict) -> None:
    """根 logger 只配置一次，输出到 stderr。"""
    log_config = config.get("logging", {}) or {}
    logging.basicConfig(
        level=getattr(logging, str(log_config.get("level", "INFO")).upper(), logging.INFO),
        format=log_config.get("format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s"),
        stream=sys.stderr,
        force=True,
    )


def _pipeline(args, config: dict) -> EMGTTLPipeline:
    return EMGTTLPipeline(load_run_config(args.config, args.set), config=config)


# ==================== 子命令 ====================

def cmd_synth(args, config: dict) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        subjects=args.subjects,
        trials_per_class=args.trials,
        duration_s=args.duration_s,
        sample_rate_hz=args.rate_hz,
        channels=args.channels,
        subject_offset=args.subject_offset,
        name=args.name,
    )
    manifest, trials = synth_generate(spec, seed=args.seed)
    path = write_dataset(manifest, trials, args.out)
    print(path)
    return EXIT_OK


def cmd_train(args, config: dict) -> int:
    outcome = _pipeline(args, config).train(out=args.out)
    print(json.dumps(outcome.to_dict(), sort_keys=True))
    print(f"accuracy={outcome.metrics.accuracy!r}")
    return EXIT_OK


def cmd_finetune(args, config: dict) -> int:
    outcome = _pipeline(args, config).finetune(source=args.source, out=args.out)
    print(json.dumps(outcome.to_dict(), sort_keys=True))
    print(f"accuracy={outcome.metrics.accuracy!r}")
    return EXIT_OK


def cmd_eval(args, config: dict) -> int:
    metrics = _pipeline(args, config).evaluate_checkpoint(args.ckpt)
    print(report_utils.metrics_json(metrics, {"checkpoint": str(args.ckpt)}))
    return EXIT_OK


def _read_variants(path: str, config: dict, default_window: SegmentationConfig):
    """
    变体文件：JSON 列表，或 {"variants": [...], "windows": [...]}
    windows 缺省时使用 config.yaml 的 presets.windows
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"Variants file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Variants file {path} is not valid JSON: {e}") from e

    if isinstance(payload, list):
        payload = {"variants": payload}
    if not isinstance(payload, dict) or not payload.get("variants"):
        raise ConfigurationError(f"Variants file {path} must list at least one variant")

    windows = payload.get("windows")
    if windows is None:
        windows = ((config.get("presets") or {}).get("windows")) or [default_window.model_dump()]
    return payload["variants"], [SegmentationConfig.model_validate(w) for w in windows]


def cmd_report(args, config: dict) -> int:
    pipeline = _pipeline(args, config)
    variants, windows = _read_variants(args.variants, config, pipeline.run_config.dataset.segmentation)
    rows = pipeline.report(variants, _seed_list(pipeline.run_config.train.seed, args.seeds), windows)
    if args.out:
        report_utils.write_csv_file(args.out, report_utils.write_variant_csv, rows)
    else:
        report_utils.write_variant_csv(sys.stdout, rows)
    return EXIT_OK


def cmd_compare(args, config: dict) -> int:
    target = _pipeline(args, config)
    source = EMGTTLPipeline(load_run_config(args.source_config), config=config)
    result = compare_transfer(source, target, _seed_list(target.run_config.train.seed, args.seeds))
    logger.info(f"Transfer comparison: {json.dumps(result.summary(), sort_keys=True)}")
    if args.out:
        report_utils.write_csv_file(args.out, report_utils.write_transfer_csv, result)
    else:
        report_utils.write_transfer_csv(sys.stdout, result)
    return EXIT_OK


def cmd_verify(args, config: dict) -> int:
    results = verify.run_suites([args.suite])
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.suite}/{r.name} ({r.elapsed_s:.2f}s) {r.detail}")
    failed = [r for r in results if not r.passed]
    logger.info(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_RUNTIME if failed else EXIT_OK


# ==================== 参数解析 ====================

def build_parser(config: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emgttl", description="EMGTTL sEMG classification and transfer learning")
    sub = parser.add_subparsers(dest="command", required=True)

    synth_defaults = config.get("synth", {}) or {}
    p = sub.add_parser("synth", help="generate a synthetic sEMG dataset")
    p.add_argument("--classes", type=_positive_int, default=synth_defaults.get("classes", 4))
    p.add_argument("--subjects", type=_positive_int, default=synth_defaults.get("subjects", 1))
    p.add_argument("--trials", type=_positive_int, default=synth_defaults.get("trials", 5), help="trials per class")
    p.add_argument("--duration-s", type=_positive_float, default=synth_defaults.get("duration_s", 4.0))
    p.add_argument("--rate-hz", type=_positive_float, default=synth_defaults.get("rate_hz", 2000.0))
    p.add_argument("--channels", type=_positive_int, default=synth_defaults.get("channels", 5))
    p.add_argument("--seed", type=int, default=synth_defaults.get("seed", 0))
    p.add_argument("--subject-offset", type=int, default=0)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_synth)

    def with_run_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="RunConfig JSON file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a RunConfig field")

    p = sub.add_parser("train", help="train a model from scratch")
    with_run_config(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("finetune", help="transfer a pretrained checkpoint and fine-tune")
    with_run_config(p)
    p.add_argument("--from", dest="source", default=None, help="pretrained checkpoint")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(handler=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint, print metrics JSON")
    with_run_config(p)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", help="architecture variant study, print CSV")
    with_run_config(p)
    p.add_argument("--variants", required=True, help="JSON list of variants (and optional windows)")
    p.add_argument("--seeds", type=_positive_int, default=3)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("compare", help="fine-tuned vs from-scratch comparison, print CSV")
    with_run_config(p)
    p.add_argument("--source-config", required=True, help="RunConfig of the pretraining task")
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("verify", help="run invariant suites")
    p.add_argument("--suite", choices=verify.SUITES + ("all",), default="all")
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = load_config()
    except (FileNotFoundError, ValueError) as e:
        print(f"emgttl: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE

    setup_logging(config)
    configure_from_config(config)
    set_debug(bool((config.get("runtime") or {}).get("debug_finite_checks", False)))

    parser = build_parser(config)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        return args.handler(args, config)
    except (ConfigurationError, ValidationError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except EMGTTLError as e:
        logger.error(f"{args.command}: {e}")
        logger.debug("Traceback:", exc_info=True)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"{args.command}: unexpected {type(e).__name__}: {e}")
        logger.debug("Traceback:", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
