# -*- coding: utf-8 -*-
"""
Checkpoint 读写测试：逐比特往返、优化器状态、损坏文件的错误定位
"""

import json
import struct

import numpy as np
import pytest

from pipelines.emgttl.errors import CheckpointVersionError, LoadError
from pipelines.emgttl.modules import autodiff as ad
from pipelines.emgttl.modules.model import EMGTTLModel
from pipelines.emgttl.modules.trainer import (
    CHECKPOINT_MAGIC,
    Checkpoint,
    TrainConfig,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
    train,
)


@pytest.fixture
def trained_checkpoint(tiny_config, make_segments):
    cfg = TrainConfig(learning_rate=0.01, batch_size=4, epochs=2, seed=1)
    ckpt, _ = train(EMGTTLModel.initialize(tiny_config, seed=1), make_segments(tiny_config, 8), (), cfg, provenance={"dataset": "unit"})
    return ckpt


def _header_length(data: bytes) -> int:
    return struct.unpack_from("<4sHI", data, 0)[2]


class TestRoundTrip:
    def test_weights_bit_identical(self, trained_checkpoint, tmp_path):
        path = save_checkpoint(trained_checkpoint, tmp_path / "model.emgt")
        restored = load_checkpoint(path)
        assert restored.weights_hash() == trained_checkpoint.weights_hash()
        assert restored.config == trained_checkpoint.config
        assert list(restored.weights) == list(trained_checkpoint.weights)
        assert restored.provenance["dataset"] == "unit"

    def test_optimizer_state_preserved(self, trained_checkpoint):
        restored = decode_checkpoint(encode_checkpoint(trained_checkpoint))
        assert restored.optimizer.t == trained_checkpoint.optimizer.t == 4
        for name, moment in trained_checkpoint.optimizer.m.items():
            np.testing.assert_array_equal(restored.optimizer.m[name], moment)
            np.testing.assert_array_equal(restored.optimizer.v[name], trained_checkpoint.optimizer.v[name])

    def test_restored_model_predicts_identically(self, trained_checkpoint, make_segments, tiny_config):
        X = np.stack([s.X for s in make_segments(tiny_config, 5, seed=3)])
        original = trained_checkpoint.to_model().forward(X).data
        restored = decode_checkpoint(encode_checkpoint(trained_checkpoint)).to_model().forward(X).data
        np.testing.assert_array_equal(original, restored)

    def test_encoding_is_deterministic(self, trained_checkpoint):
        assert encode_checkpoint(trained_checkpoint) == encode_checkpoint(trained_checkpoint)

    def test_float64_model(self, tiny_config):
        with ad.precision("float64"):
            model = EMGTTLModel.initialize(tiny_config, seed=2)
        restored = decode_checkpoint(encode_checkpoint(Checkpoint.from_model(model)))
        assert restored.dtype == np.float64
        assert restored.optimizer is None
        assert restored.weights_hash() == model.weights_hash()

    def test_sinusoidal_positions_stay_fixed(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config.replace(pos_embedding="sinusoidal"))
        restored = decode_checkpoint(encode_checkpoint(Checkpoint.from_model(model))).to_model()
        assert not restored["embed.E_pos"].trainable

    def test_header_is_sorted_json(self, trained_checkpoint):
        data = encode_checkpoint(trained_checkpoint)
        assert data[:4] == CHECKPOINT_MAGIC
        header = json.loads(data[10 : 10 + _header_length(data)])
        assert header["dtype"] == "<f4"
        assert header["config"]["embed_dim"] == 8
        assert header["optimizer"] == {"t": 4}


class TestCorruption:
    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError, match="not found"):
            load_checkpoint(tmp_path / "absent.emgt")

    def test_bad_magic(self, trained_checkpoint):
        data = b"XXXX" + encode_checkpoint(trained_checkpoint)[4:]
        with pytest.raises(LoadError, match="byte offset 0"):
            decode_checkpoint(data)

    def test_newer_version(self, trained_checkpoint):
        data = bytearray(encode_checkpoint(trained_checkpoint))
        struct.pack_into("<H", data, 4, 2)
        with pytest.raises(CheckpointVersionError, match="newer"):
            decode_checkpoint(bytes(data))

    def test_truncated_payload_reports_offset(self, trained_checkpoint):
        data = encode_checkpoint(trained_checkpoint)
        cut = data[:-10]
        with pytest.raises(LoadError, match=f"byte offset {len(cut)}") as excinfo:
            decode_checkpoint(cut)
        assert excinfo.value.offset == len(cut)

    def test_truncated_header(self, trained_checkpoint):
        data = encode_checkpoint(trained_checkpoint)
        with pytest.raises(LoadError, match="header"):
            decode_checkpoint(data[:20])

    def test_flipped_payload_byte(self, trained_checkpoint):
        data = bytearray(encode_checkpoint(trained_checkpoint))
        data[-1] ^= 0xFF
        with pytest.raises(LoadError, match="checksum"):
            decode_checkpoint(bytes(data))

    def test_trailing_bytes(self, trained_checkpoint):
        with pytest.raises(LoadError, match="trailing"):
            decode_checkpoint(encode_checkpoint(trained_checkpoint) + b"\x00")
