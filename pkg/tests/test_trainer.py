# -*- coding: utf-8 -*-
"""
训练测试：Adam 更新公式、训练确定性、最佳 checkpoint、评估指标
"""

import numpy as np
import pytest
from pydantic import ValidationError

from pipelines.emgttl.errors import ConfigurationError, TrainingError, UsageError
from pipelines.emgttl.modules.autodiff import Parameter
from pipelines.emgttl.modules.dataset import Segment
from pipelines.emgttl.modules.model import EMGTTLModel
from pipelines.emgttl.modules.trainer import (
    ADAM_EPS,
    AdamState,
    Metrics,
    TrainConfig,
    Trainer,
    adam_step,
    evaluate,
    train,
)


class TestTrainConfig:
    def test_learning_rate_required(self):
        with pytest.raises(ValidationError):
            TrainConfig()

    def test_defaults(self):
        cfg = TrainConfig(learning_rate=1e-3)
        assert cfg.betas == (0.9, 0.999)
        assert cfg.weight_decay == pytest.approx(0.00055)
        assert cfg.batch_size == 512
        assert cfg.precision == "32"

    @pytest.mark.parametrize("value,expected", [("float64", "64"), (64, "64"), ("32-bit", "32")])
    def test_precision_aliases(self, value, expected):
        assert TrainConfig(learning_rate=1e-3, precision=value).precision == expected

    def test_invalid_betas(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=1e-3, betas=(0.9, 1.0))


class TestAdam:
    def test_first_step_matches_formula(self):
        cfg = TrainConfig(learning_rate=0.01, weight_decay=0.1)
        p = Parameter("w", np.array([1.0, -2.0, 0.5]), dtype=np.float64)
        g = np.array([0.3, -0.1, 0.0])
        before = p.data.copy()
        state = adam_step([p], {"w": g}, AdamState(), cfg)

        # t=1 时偏差修正后 m̂ = g，v̂ = g²
        expected = before * (1.0 - 0.01 * 0.1) - 0.01 * g / (np.abs(g) + ADAM_EPS)
        np.testing.assert_allclose(p.data, expected, rtol=1e-12)
        assert state.t == 1
        np.testing.assert_allclose(state.m["w"], 0.1 * g)
        np.testing.assert_allclose(state.v["w"], 0.001 * g * g)

    def test_second_step_uses_moments(self):
        cfg = TrainConfig(learning_rate=0.01, weight_decay=0.0)
        p = Parameter("w", np.array([0.0]), dtype=np.float64)
        state = AdamState()
        adam_step([p], {"w": np.array([1.0])}, state, cfg)
        after_first = p.data.copy()
        adam_step([p], {"w": np.array([-1.0])}, state, cfg)

        m = 0.9 * 0.1 + 0.1 * -1.0
        v = 0.999 * 0.001 + 0.001 * 1.0
        m_hat, v_hat = m / (1 - 0.9 ** 2), v / (1 - 0.999 ** 2)
        np.testing.assert_allclose(p.data, after_first - 0.01 * m_hat / (np.sqrt(v_hat) + ADAM_EPS), rtol=1e-12)

    def test_frozen_parameters_untouched(self):
        cfg = TrainConfig(learning_rate=0.1)
        frozen = Parameter("frozen", np.ones(2), trainable=False, dtype=np.float64)
        live = Parameter("live", np.ones(2), dtype=np.float64)
        state = adam_step([frozen, live], {"frozen": np.ones(2), "live": np.ones(2)}, AdamState(), cfg)
        np.testing.assert_array_equal(frozen.data, 1.0)
        assert "frozen" not in state.m
        assert np.all(live.data < 1.0)

    def test_zero_gradient_without_decay_is_noop(self):
        cfg = TrainConfig(learning_rate=0.1, weight_decay=0.0)
        p = Parameter("w", np.array([1.0, -2.0, 0.5]), dtype=np.float64)
        state = AdamState()
        for _ in range(3):
            adam_step([p], {"w": np.zeros(3)}, state, cfg)
        np.testing.assert_array_equal(p.data, [1.0, -2.0, 0.5])
        assert state.t == 3

    def test_update_bounded_by_learning_rate(self):
        cfg = TrainConfig(learning_rate=0.01, weight_decay=0.0)
        rng = np.random.default_rng(0)
        scales = np.array([1e-3, 1e-2, 1.0, 1e2, 1e4])
        p = Parameter("w", np.zeros(5), dtype=np.float64)
        state = AdamState()
        steps = []
        for _ in range(50):
            before = p.data.copy()
            adam_step([p], {"w": scales * rng.normal()}, state, cfg)
            steps.append(np.abs(p.data - before))
        steps = np.array(steps)
        np.testing.assert_allclose(steps[0], 0.01, rtol=1e-3)
        assert steps.max() <= 2 * 0.01
        # 更新幅度与梯度尺度无关
        np.testing.assert_allclose(steps[:, 1:] / steps[:, [2]], 1.0, rtol=1e-4)

    def test_non_finite_gradient_names_parameter(self):
        cfg = TrainConfig(learning_rate=0.1)
        p = Parameter("encoder.0.attn.W_q", np.ones(2), dtype=np.float64)
        with pytest.raises(TrainingError, match="encoder.0.attn.W_q") as excinfo:
            adam_step([p], {p.name: np.array([1.0, np.nan])}, AdamState(), cfg)
        assert excinfo.value.step == 1
        np.testing.assert_array_equal(p.data, 1.0)


class TestTrainer:
    CFG = TrainConfig(learning_rate=0.01, batch_size=4, epochs=3, seed=5)

    @pytest.mark.parametrize("num_classes", [3, 22])
    def test_fresh_model_first_loss_near_log_classes(self, tiny_config, make_segments, num_classes):
        config = tiny_config.replace(num_classes=num_classes)
        segments = make_segments(config, 2 * num_classes)
        X = np.stack([s.X for s in segments])
        y = np.array([s.y for s in segments])
        trainer = Trainer(EMGTTLModel.initialize(config, seed=0), self.CFG)
        loss = trainer.train_step(X, y, dropout_seed=0)
        assert loss == pytest.approx(np.log(num_classes), rel=0.1)

    def test_same_seed_bit_identical(self, tiny_config, make_segments):
        segments = make_segments(tiny_config, 12)
        first, _ = train(EMGTTLModel.initialize(tiny_config, seed=5), segments, (), self.CFG)
        second, _ = train(EMGTTLModel.initialize(tiny_config, seed=5), segments, (), self.CFG)
        assert first.weights_hash() == second.weights_hash()

    def test_different_seed_differs(self, tiny_config, make_segments):
        segments = make_segments(tiny_config, 12)
        first, _ = train(EMGTTLModel.initialize(tiny_config, seed=5), segments, (), self.CFG)
        second, _ = train(EMGTTLModel.initialize(tiny_config, seed=5), segments, (), self.CFG.replace(seed=6))
        assert first.weights_hash() != second.weights_hash()

    def test_history_and_provenance(self, tiny_config, make_segments):
        segments = make_segments(tiny_config, 12)
        held_out = make_segments(tiny_config, 6, seed=1, trial_id=2)
        ckpt, history = train(
            EMGTTLModel.initialize(tiny_config), segments, held_out, self.CFG, provenance={"dataset": "unit"}
        )
        assert [r.epoch for r in history] == [1, 2, 3]
        assert all(r.eval_accuracy is not None for r in history)
        assert ckpt.provenance["dataset"] == "unit"
        assert ckpt.provenance["epochs"] == 3
        assert ckpt.provenance["train_config"]["learning_rate"] == 0.01
        assert len(ckpt.provenance["history"]) == 3
        assert ckpt.optimizer.t == 9

    def test_best_checkpoint_tracks_best_epoch(self, tiny_config, make_segments):
        segments = make_segments(tiny_config, 12)
        held_out = make_segments(tiny_config, 6, seed=1, trial_id=2)
        trainer = Trainer(EMGTTLModel.initialize(tiny_config), self.CFG.replace(epochs=4))
        _, history = trainer.fit(segments, held_out)
        best = max(r.eval_accuracy for r in history)
        first_best = next(r.epoch for r in history if r.eval_accuracy == best)
        assert trainer.best_accuracy == best
        assert trainer.best_checkpoint.provenance["epochs"] == first_best

    def test_no_eval_set_no_best(self, tiny_config, make_segments):
        trainer = Trainer(EMGTTLModel.initialize(tiny_config), self.CFG.replace(epochs=1))
        trainer.fit(make_segments(tiny_config, 8))
        assert trainer.best_checkpoint is None
        assert trainer.history[0].eval_accuracy is None

    def test_training_loss_decreases(self, tiny_config, make_segments):
        segments = make_segments(tiny_config, 12)
        _, history = train(EMGTTLModel.initialize(tiny_config), segments, (), self.CFG.replace(epochs=40))
        assert history[-1].train_loss < history[0].train_loss

    def test_precision_64_casts_model(self, tiny_config, make_segments):
        model = EMGTTLModel.initialize(tiny_config)
        ckpt, _ = train(model, make_segments(tiny_config, 4), (), self.CFG.replace(epochs=1, precision="64"))
        assert model.dtype == np.float64
        assert ckpt.dtype == np.float64

    def test_geometry_checked_before_first_step(self, tiny_config, make_segments):
        model = EMGTTLModel.initialize(tiny_config)
        before = model.weights_hash()
        wrong = [Segment(X=np.zeros((2, 10)), y=0, subject_id="1", trial_id=1, start=0)]
        with pytest.raises(ConfigurationError, match="W=8"):
            train(model, wrong, (), self.CFG)
        bad_label = [Segment(X=np.zeros((2, 8)), y=3, subject_id="1", trial_id=1, start=0)]
        with pytest.raises(ConfigurationError, match="label 3"):
            train(model, bad_label, (), self.CFG)
        assert model.weights_hash() == before

    def test_empty_training_set(self, tiny_config):
        with pytest.raises(ConfigurationError):
            train(EMGTTLModel.initialize(tiny_config), [], (), self.CFG)


class TestEvaluate:
    def test_empty_set(self, tiny_config):
        with pytest.raises(UsageError, match="empty evaluation set"):
            evaluate(EMGTTLModel.initialize(tiny_config), [])

    def test_accuracy_is_trace_over_total(self, tiny_config, make_segments):
        model = EMGTTLModel.initialize(tiny_config, seed=2)
        segments = make_segments(tiny_config, 10)
        metrics = evaluate(model, segments, batch_size=3)
        assert metrics.confusion.shape == (3, 3)
        assert metrics.total == 10
        assert metrics.accuracy == pytest.approx(np.trace(metrics.confusion) / 10)
        np.testing.assert_array_equal(metrics.support, [4, 3, 3])
        predicted = model.predict(np.stack([s.X for s in segments]))
        assert metrics.accuracy == pytest.approx(np.mean(predicted == [s.y for s in segments]))

    def test_does_not_touch_weights(self, tiny_config, make_segments):
        model = EMGTTLModel.initialize(tiny_config)
        before = model.weights_hash()
        evaluate(model, make_segments(tiny_config, 5))
        assert model.weights_hash() == before

    def test_parallel_matches_serial(self, tiny_config, make_segments):
        model = EMGTTLModel.initialize(tiny_config, seed=3)
        segments = make_segments(tiny_config, 11)
        serial = evaluate(model, segments, batch_size=4)
        parallel = evaluate(model, segments, batch_size=4, workers=3)
        np.testing.assert_array_equal(serial.confusion, parallel.confusion)
        assert parallel.mean_loss == pytest.approx(serial.mean_loss, rel=1e-5)

    def test_recall_none_for_absent_class(self):
        metrics = Metrics.from_confusion(np.array([[2, 1, 0], [0, 3, 0], [0, 0, 0]]), loss_sum=6.0)
        assert metrics.per_class_recall == [pytest.approx(2 / 3), 1.0, None]
        assert metrics.mean_loss == 1.0
        assert metrics.to_dict()["support"] == [3, 3, 0]
