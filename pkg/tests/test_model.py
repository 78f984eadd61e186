# -*- coding: utf-8 -*-
"""
模型测试：配置校验、参数计数、patchify 布局、前向形状与注意力、初始化确定性
"""

import numpy as np
import pytest
from pydantic import ValidationError

from pipelines.emgttl.errors import ConfigurationError, ShapeError
from pipelines.emgttl.modules import autodiff as ad
from pipelines.emgttl.modules.model import (
    ARCHITECTURE_VARIANTS,
    EMGTTLModel,
    ModelConfig,
    param_count,
    parameter_layout,
    patchify,
    sinusoidal_table,
    unpatchify,
    variant_config,
)


class TestModelConfig:
    def test_derived_geometry(self, tiny_config):
        assert tiny_config.num_patches == 4
        assert tiny_config.patch_dim == 4
        assert tiny_config.head_dim == 4
        assert tiny_config.tokens == 5

    def test_heads_must_divide_embedding(self):
        with pytest.raises(ValidationError, match="d mod h"):
            ModelConfig(channels=2, window=8, embed_dim=65, num_layers=1, num_heads=8, encoder_hidden=16, num_classes=3)

    def test_channels_must_divide_window(self):
        with pytest.raises(ValidationError, match="W mod C"):
            ModelConfig(channels=3, window=8, embed_dim=8, num_layers=1, num_heads=2, encoder_hidden=16, num_classes=3)

    @pytest.mark.parametrize("p", [-0.1, 1.0])
    def test_dropout_range(self, tiny_config, p):
        with pytest.raises(ValidationError):
            tiny_config.replace(dropout_p=p)

    def test_unknown_field_rejected(self, tiny_config):
        with pytest.raises(ValidationError):
            ModelConfig(**tiny_config.model_dump(), attention="linear")

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            variant_config(7, channels=5, window=100, num_classes=4)


class TestParamCount:
    def test_tiny_closed_form(self, tiny_config):
        assert param_count(tiny_config) == 843
        assert EMGTTLModel.initialize(tiny_config).param_count() == 843

    @pytest.mark.parametrize("variant_id", sorted(ARCHITECTURE_VARIANTS))
    def test_variants_construct_and_count(self, variant_id):
        config = variant_config(variant_id, channels=5, window=100, num_classes=6)
        shape = ARCHITECTURE_VARIANTS[variant_id]
        assert (config.embed_dim, config.num_layers, config.encoder_hidden, config.num_heads) == tuple(shape)
        model = EMGTTLModel.initialize(config, seed=0)
        assert model.param_count() == param_count(config)

    def test_two_layer_encoder_mlp(self, tiny_config):
        deep = tiny_config.replace(encoder_mlp_depth=2)
        assert param_count(deep) == 843 + 16 * 16 + 16
        assert EMGTTLModel.initialize(deep).param_count() == param_count(deep)

    def test_layout_names_unique(self, tiny_config):
        names = [name for name, _, _ in parameter_layout(tiny_config)]
        assert len(names) == len(set(names))


class TestPatchify:
    def test_channel_major_blocks(self):
        X = np.arange(2 * 6).reshape(2, 6)
        patches = patchify(X, 2)
        assert patches.shape == (3, 4)
        for j in range(3):
            np.testing.assert_array_equal(patches[j], X[:, 2 * j : 2 * j + 2].reshape(-1))

    def test_batched_inverse(self):
        X = np.random.default_rng(0).standard_normal((4, 3, 12))
        np.testing.assert_array_equal(unpatchify(patchify(X, 3), 3), X)

    def test_window_not_divisible(self):
        with pytest.raises(ConfigurationError):
            patchify(np.zeros((2, 7)), 2)

    def test_wrong_channel_count(self):
        with pytest.raises(ShapeError):
            patchify(np.zeros((3, 6)), 2)


class TestForward:
    def test_single_segment_and_batch_shapes(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config, seed=0)
        X = np.random.default_rng(1).uniform(-1, 1, size=(5, 2, 8))
        assert model.forward(X[0]).shape == (3,)
        assert model.forward(X).shape == (5, 3)

    def test_batch_rows_match_single_segments(self, tiny_config):
        with ad.precision("float64"):
            model = EMGTTLModel.initialize(tiny_config, seed=0)
            X = np.random.default_rng(1).uniform(-1, 1, size=(3, 2, 8))
            batched = model.forward(X).data
            singles = np.stack([model.forward(x).data for x in X])
        np.testing.assert_allclose(batched, singles, rtol=1e-12, atol=1e-14)

    def test_attention_rows_are_distributions(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config.replace(num_layers=2), seed=0)
        X = np.random.default_rng(2).uniform(-1, 1, size=(4, 2, 8))
        _, attentions = model.forward(X, return_attention=True)
        assert len(attentions) == 2
        for attention in attentions:
            assert attention.shape == (4, 2, 5, 5)
            assert np.all(attention >= 0)
            np.testing.assert_allclose(attention.sum(axis=-1), 1.0, atol=1e-5)

    def test_inference_ignores_dropout_seed(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config.replace(dropout_p=0.5), seed=0)
        X = np.random.default_rng(3).uniform(-1, 1, size=(2, 2, 8))
        np.testing.assert_array_equal(model.forward(X, seed=1).data, model.forward(X, seed=2).data)

    def test_training_dropout_deterministic_in_seed(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config.replace(dropout_p=0.5), seed=0)
        X = np.random.default_rng(3).uniform(-1, 1, size=(2, 2, 8))
        first = model.forward(X, training=True, seed=11).data
        np.testing.assert_array_equal(first, model.forward(X, training=True, seed=11).data)
        assert not np.array_equal(first, model.forward(X, training=False).data)

    def test_wrong_input_geometry(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config)
        with pytest.raises(ShapeError, match="C=2, W=8"):
            model.forward(np.zeros((2, 2, 10)))

    def test_predict_is_argmax(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config, seed=4)
        X = np.random.default_rng(5).uniform(-1, 1, size=(6, 2, 8))
        np.testing.assert_array_equal(model.predict(X), np.argmax(model.forward(X).data, axis=-1))
        assert model.predict(X[0]).shape == (1,)

    def test_pooled_output_ignores_patch_order_without_positions(self, tiny_config):
        with ad.precision("float64"):
            model = EMGTTLModel.initialize(tiny_config.replace(num_layers=2), seed=0)
            model["embed.E_pos"].data[...] = 0.0
            X = np.random.default_rng(6).uniform(-1, 1, size=(3, 2, 8))
            # 以 C 列为一块交换 patch 顺序
            blocks = np.split(X, 4, axis=-1)
            permuted = np.concatenate([blocks[i] for i in (2, 0, 3, 1)], axis=-1)
            np.testing.assert_allclose(model.forward(permuted).data, model.forward(X).data, rtol=1e-10, atol=1e-12)

    def test_zeroed_encoder_layer_is_identity(self, tiny_config):
        with ad.precision("float64"):
            model = EMGTTLModel.initialize(tiny_config, seed=0)
            for p in model.parameters():
                if p.name.startswith("encoder.0."):
                    p.data[...] = 0.0
            z = np.random.default_rng(7).normal(size=(2, 5, 8))
            out, attention = model.encoder_layer(ad.Tensor(z), 0)
        np.testing.assert_array_equal(out.data, z)
        np.testing.assert_allclose(attention.data, 1.0 / 5)


class TestInitialization:
    def test_same_seed_bit_identical(self, tiny_config):
        first = EMGTTLModel.initialize(tiny_config, seed=9)
        second = EMGTTLModel.initialize(tiny_config, seed=9)
        assert first.weights_hash() == second.weights_hash()
        assert EMGTTLModel.initialize(tiny_config, seed=10).weights_hash() != first.weights_hash()

    def test_initial_values(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config, seed=0)
        assert np.all(np.abs(model["embed.E"].data) <= 0.06 + 1e-6)
        np.testing.assert_array_equal(model["encoder.0.ln1.gain"].data, 1.0)
        np.testing.assert_array_equal(model["head.out.bias"].data, 0.0)

    def test_sinusoidal_positions_are_fixed(self, tiny_config):
        config = tiny_config.replace(pos_embedding="sinusoidal")
        model = EMGTTLModel.initialize(config, seed=0)
        assert model.fixed_names() == ["embed.E_pos"]
        assert not model["embed.E_pos"].trainable
        np.testing.assert_allclose(model["embed.E_pos"].data, sinusoidal_table(5, 8), atol=1e-6)
        assert model.param_count() == param_count(config)
        assert len(model.trainable_parameters()) == len(model.parameters()) - 1

    def test_head_and_encoder_partition(self, tiny_config):
        model = EMGTTLModel.initialize(tiny_config)
        heads, encoder = model.head_names(), model.encoder_names()
        assert heads == [n for n in model.params if n.startswith("head.")]
        assert set(heads).isdisjoint(encoder)
        assert len(heads) + len(encoder) == len(model.parameters())
        assert "norm.gain" in encoder
