# -*- coding: utf-8 -*-
"""
CLI 测试：退出码、stdout 输出格式、train / finetune / eval 端到端
"""

import json
import logging

import pytest

import main_cli
from pipelines.emgttl.emgttl_pipeline import EMGTTLPipeline
from pipelines.emgttl.modules.dataset import SynthSpec, synth_generate, write_dataset
from pipelines.emgttl.modules.model import EMGTTLModel
from pipelines.emgttl.modules.trainer import Checkpoint, load_checkpoint, save_checkpoint
from pipelines.emgttl.schemas import load_run_config
from pipelines.emgttl.utils import report_utils


@pytest.fixture
def run_config(synth_dataset, write_run_config):
    return write_run_config(synth_dataset)


class TestUsageErrors:
    def test_synth_zero_channels(self, tmp_path, capsys):
        assert main_cli.main(["synth", "--channels", "0", "--out", str(tmp_path)]) == 2
        assert "positive integer" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main_cli.main([]) == 2

    def test_heads_not_dividing_embedding(self, run_config, tmp_path, capsys):
        code = main_cli.main([
            "train", "--config", str(run_config), "--out", str(tmp_path / "m.emgt"),
            "--set", "model.embed_dim=65", "--set", "model.num_heads=8",
        ])
        assert code == 2
        assert "d mod h" in capsys.readouterr().err
        assert not (tmp_path / "m.emgt").exists()

    def test_missing_manifest(self, tmp_path, write_run_config, capsys):
        config = write_run_config(tmp_path / "nowhere" / "manifest.json")
        assert main_cli.main(["train", "--config", str(config), "--out", str(tmp_path / "m.emgt")]) == 2
        assert "dataset.manifest" in capsys.readouterr().err

    def test_unknown_config_key(self, synth_dataset, write_run_config, tmp_path):
        config = write_run_config(synth_dataset, train={"momentum": 0.9})
        assert main_cli.main(["train", "--config", str(config), "--out", str(tmp_path / "m.emgt")]) == 2

    def test_report_needs_two_seeds(self, run_config, tmp_path, capsys):
        variants = tmp_path / "variants.json"
        variants.write_text(json.dumps([1]))
        code = main_cli.main(["report", "--config", str(run_config), "--variants", str(variants), "--seeds", "1"])
        assert code == 2
        assert "need ≥ 2 seeds" in capsys.readouterr().err


class TestRuntimeErrors:
    def test_finetune_from_missing_checkpoint(self, run_config, tmp_path, capsys):
        code = main_cli.main([
            "finetune", "--config", str(run_config), "--from", str(tmp_path / "absent.emgt"), "--out", str(tmp_path / "ft.emgt"),
        ])
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_eval_on_empty_split(self, synth_dataset, write_run_config, tiny_config, tmp_path, capsys):
        ckpt_path = save_checkpoint(Checkpoint.from_model(EMGTTLModel.initialize(tiny_config)), tmp_path / "m.emgt")
        config = write_run_config(synth_dataset, dataset={"split": {"train": [1, 2, 3], "test": []}})
        assert main_cli.main(["eval", "--config", str(config), "--ckpt", str(ckpt_path)]) == 1
        assert "empty evaluation set" in capsys.readouterr().err

    def test_finetune_geometry_mismatch(self, synth_dataset, write_run_config, tiny_config, tmp_path, capsys):
        # 源模型 W=16，目标任务 4 ms 窗口只有 W=8
        source = tiny_config.replace(window=16)
        ckpt_path = save_checkpoint(Checkpoint.from_model(EMGTTLModel.initialize(source)), tmp_path / "src.emgt")
        code = main_cli.main([
            "finetune", "--config", str(write_run_config(synth_dataset)), "--from", str(ckpt_path), "--out", str(tmp_path / "ft.emgt"),
        ])
        assert code == 1
        assert "window" in capsys.readouterr().err


class TestEndToEnd:
    def test_synth_writes_manifest(self, tmp_path, capsys):
        code = main_cli.main([
            "synth", "--classes", "2", "--trials", "2", "--duration-s", "0.05", "--channels", "2", "--out", str(tmp_path / "d"),
        ])
        assert code == 0
        assert capsys.readouterr().out.strip().endswith("manifest.json")
        assert (tmp_path / "d" / "manifest.json").is_file()

    def test_train_then_eval_then_finetune(self, run_config, tmp_path, capsys):
        out = tmp_path / "model.emgt"
        assert main_cli.main(["train", "--config", str(run_config), "--out", str(out)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        summary = json.loads(lines[0])
        assert lines[-1].startswith("accuracy=")
        accuracy = float(lines[-1].split("=", 1)[1])
        assert 0.0 <= accuracy <= 1.0
        assert summary["accuracy"] == accuracy
        assert out.is_file()
        assert report_utils.history_path(out).is_file()
        assert report_utils.best_checkpoint_path(out).is_file()
        assert report_utils.timer_report_path(out).is_file()
        assert len(report_utils.read_history(report_utils.history_path(out))) == 1

        assert main_cli.main(["eval", "--config", str(run_config), "--ckpt", str(out)]) == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["accuracy"] == accuracy
        assert sum(metrics["support"]) == 147

        tuned = tmp_path / "tuned.emgt"
        assert main_cli.main(["finetune", "--config", str(run_config), "--from", str(out), "--out", str(tuned)]) == 0
        assert capsys.readouterr().out.strip().splitlines()[-1].startswith("accuracy=")
        provenance = load_checkpoint(tuned).provenance
        assert provenance["source_weights_sha256"] == load_checkpoint(out).weights_hash()
        assert provenance["train_config"]["learning_rate"] == pytest.approx(0.003 / 3)

    def test_identical_runs_identical_checkpoints(self, run_config, tmp_path, capsys):
        first, second = tmp_path / "a.emgt", tmp_path / "b.emgt"
        assert main_cli.main(["train", "--config", str(run_config), "--out", str(first)]) == 0
        assert main_cli.main(["train", "--config", str(run_config), "--out", str(second)]) == 0
        assert load_checkpoint(first).weights_hash() == load_checkpoint(second).weights_hash()

    def test_compare_prints_one_row_per_seed(self, synth_dataset, write_run_config, tmp_path, capsys):
        spec = SynthSpec(num_classes=2, trials_per_class=3, duration_s=0.1, sample_rate_hz=2000.0, channels=2, subject_offset=10)
        target_manifest = write_dataset(*synth_generate(spec, seed=0), tmp_path / "data_b")
        source = write_run_config(synth_dataset, name="source.json")
        target = write_run_config(target_manifest, name="target.json")

        code = main_cli.main(["compare", "--config", str(target), "--source-config", str(source), "--seeds", "2"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "seed,finetuned_accuracy,scratch_accuracy"
        assert [int(line.split(",")[0]) for line in lines[1:]] == [0, 1]
        for line in lines[1:]:
            assert all(0.0 <= float(v) <= 1.0 for v in line.split(",")[1:])

    def test_verify_segmentation(self, capsys):
        assert main_cli.main(["verify", "--suite", "segmentation"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 3 and "FAIL" not in out

    def test_pipeline_run_summary(self, run_config, tmp_path):
        out = tmp_path / "run.emgt"
        summary = EMGTTLPipeline(load_run_config(run_config)).run(out=out)
        assert summary["epochs"] == 1
        assert summary["checkpoint"] == str(out)
        assert summary["weights_sha256"] == load_checkpoint(out).weights_hash()

    def test_evaluate_checkpoint_logs_config(self, run_config, tmp_path, caplog):
        pipeline = EMGTTLPipeline(load_run_config(run_config))
        out = tmp_path / "m.emgt"
        pipeline.train(out=out)
        caplog.clear()
        with caplog.at_level(logging.INFO, logger="EMGTTLPipeline"):
            pipeline.evaluate_checkpoint(out)
        messages = [record.getMessage() for record in caplog.records if record.name == "EMGTTLPipeline"]
        assert messages[0] == f"[emgttl] config: {pipeline.run_config.to_json()}"
        assert messages[-1].startswith("[emgttl] evaluate:")
