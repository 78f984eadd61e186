# -*- coding: utf-8 -*-
"""
自动微分引擎测试：tape 语义、广播规则、算子数值与梯度检验
"""

import math

import numpy as np
import pytest

from pipelines.emgttl.errors import ConfigurationError, DataError, ShapeError, UsageError
from pipelines.emgttl.modules import autodiff as ad
from pipelines.emgttl.modules.model import self_attention_head


def _leaf(rng, shape, name):
    return ad.Tensor(rng.standard_normal(shape), requires_grad=True, name=name)


def _project(out, seed):
    weights = ad.Tensor(np.random.default_rng(seed).standard_normal(out.shape))
    return ad.sum_(ad.mul(out, weights))


class TestTape:
    def test_gradient_accumulates_over_shared_inputs(self):
        with ad.precision("float64"):
            a = ad.Tensor([1.0, -2.0, 3.0], requires_grad=True)
            with ad.Tape():
                loss = ad.sum_(a * a + a)
            loss.backward()
        np.testing.assert_allclose(a.grad, 2.0 * a.data + 1.0)

    def test_parameter_gradients_returned_by_name(self):
        p = ad.Parameter("w", np.ones((2, 2)))
        x = ad.Tensor(np.arange(4.0).reshape(2, 2))
        with ad.Tape():
            loss = ad.sum_(ad.matmul(x, p))
        grads = ad.backward(loss)
        assert set(grads) == {"w"}
        np.testing.assert_allclose(grads["w"], x.data.T @ np.ones((2, 2)))

    def test_non_scalar_loss_rejected(self):
        a = ad.Tensor([1.0, 2.0], requires_grad=True)
        with ad.Tape():
            out = a * a
        with pytest.raises(UsageError, match="scalar"):
            ad.backward(out)

    def test_loss_outside_tape_rejected(self):
        a = ad.Tensor([1.0, 2.0], requires_grad=True)
        loss = ad.sum_(a * a)
        with pytest.raises(UsageError):
            ad.backward(loss)

    def test_consumed_tape_rejects_reuse(self):
        a = ad.Tensor([1.0, 2.0], requires_grad=True)
        with ad.Tape():
            loss = ad.sum_(a * a)
            ad.backward(loss)
            with pytest.raises(UsageError):
                ad.mul(a, a)
        with pytest.raises(UsageError):
            ad.backward(loss)

    def test_nothing_recorded_without_requires_grad(self):
        x = ad.Tensor(np.ones(3))
        with ad.Tape() as tape:
            ad.sum_(x * 2.0)
        assert len(tape) == 0

    def test_precision_context_restores_default(self):
        before = ad.get_default_dtype()
        with ad.precision("float64"):
            assert ad.Tensor([1.0]).dtype == np.float64
        assert ad.get_default_dtype() is before

    def test_unknown_precision(self):
        with pytest.raises(ConfigurationError):
            ad.resolve_precision("16")

    def test_tensor_division_by_tensor_rejected(self):
        with pytest.raises(UsageError):
            ad.Tensor([1.0]) / ad.Tensor([2.0])

    def test_debug_mode_names_op(self):
        ad.set_debug(True)
        try:
            with pytest.raises(DataError, match="scale"):
                ad.scale(ad.Tensor([1e308], dtype=np.float64), 10.0)
        finally:
            ad.set_debug(False)


class TestBroadcasting:
    def test_leading_dim_broadcast_gradient_sums(self):
        with ad.precision("float64"):
            a = ad.Tensor(np.ones((3, 4)), requires_grad=True)
            b = ad.Tensor(np.arange(4.0), requires_grad=True)
            with ad.Tape():
                loss = ad.sum_(ad.add(a, b))
            loss.backward()
        np.testing.assert_allclose(b.grad, np.full(4, 3.0))
        np.testing.assert_allclose(a.grad, np.ones((3, 4)))

    def test_non_trailing_broadcast_rejected(self):
        with pytest.raises(ShapeError, match=r"\(3, 4\).*\(3,\)"):
            ad.add(ad.Tensor(np.ones((3, 4))), ad.Tensor(np.ones(3)))

    def test_matmul_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4, 5))))

    def test_layer_norm_gain_shape_checked(self):
        with pytest.raises(ShapeError):
            ad.layer_norm(ad.Tensor(np.ones((2, 4))), ad.Tensor(np.ones(3)), ad.Tensor(np.zeros(3)))


class TestOpValues:
    def test_gelu_is_exact_erf_form(self):
        x = np.array([-2.0, -0.5, 0.0, 1.0, 3.0])
        expected = [v * 0.5 * (1.0 + math.erf(v / math.sqrt(2.0))) for v in x]
        with ad.precision("float64"):
            out = ad.gelu(ad.Tensor(x)).data
        np.testing.assert_allclose(out, expected, rtol=1e-12)
        assert out[3] == pytest.approx(0.8413447460685429)

    def test_softmax_rows_sum_to_one_for_large_logits(self):
        x = ad.Tensor(np.array([[1000.0, 1001.0, 999.0], [-5.0, 0.0, 5.0]]), dtype=np.float64)
        y = ad.softmax(x).data
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)

    def test_layer_norm_normalizes_trailing_dim(self):
        rng = np.random.default_rng(0)
        with ad.precision("float64"):
            x = ad.Tensor(rng.normal(3.0, 2.0, size=(4, 16)))
            out = ad.layer_norm(x, ad.Tensor(np.ones(16)), ad.Tensor(np.zeros(16))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-3)

    def test_cross_entropy_matches_manual(self):
        logits = np.array([[2.0, 1.0, 0.1], [0.5, 2.5, -1.0]])
        labels = [0, 1]
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        expected = -np.mean(np.log(probs[[0, 1], labels]))
        with ad.precision("float64"):
            loss = ad.cross_entropy(ad.Tensor(logits), labels)
        assert loss.item() == pytest.approx(expected, rel=1e-12)

    def test_cross_entropy_uniform_logits(self):
        with ad.precision("float64"):
            loss = ad.cross_entropy(ad.Tensor(np.full((4, 22), 0.7)), [0, 5, 13, 21])
        assert loss.item() == pytest.approx(math.log(22), rel=1e-12)

    def test_cross_entropy_label_out_of_range(self):
        with pytest.raises(DataError):
            ad.cross_entropy(ad.Tensor(np.zeros((2, 3))), [0, 3])

    def test_dropout_inference_is_identity(self):
        x = ad.Tensor(np.ones((4, 4)))
        assert ad.dropout(x, 0.5, training=False) is x

    def test_dropout_deterministic_and_rescaled(self):
        x = ad.Tensor(np.ones((200, 200)), dtype=np.float64)
        first = ad.dropout(x, 0.25, training=True, seed=7).data
        second = ad.dropout(x, 0.25, training=True, seed=7).data
        np.testing.assert_array_equal(first, second)
        np.testing.assert_allclose(np.unique(first), [0.0, 1.0 / 0.75])
        assert first.mean() == pytest.approx(1.0, abs=0.02)

    @pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
    def test_dropout_probability_range(self, p):
        with pytest.raises(ConfigurationError):
            ad.dropout(ad.Tensor(np.ones(3)), p, training=True, seed=0)

    def test_slice_returns_copy(self):
        x = ad.Tensor(np.arange(6.0).reshape(2, 3))
        part = x[:, 1]
        part.data[0] = 100.0
        assert x.data[0, 1] == 1.0

    def test_expand_prepends_leading_dims(self):
        x = ad.Tensor(np.arange(3.0))
        assert ad.expand(x, (2, 4)).shape == (2, 4, 3)


def _case_layer_norm(rng):
    x, g, b = _leaf(rng, (3, 5), "x"), _leaf(rng, (5,), "gain"), _leaf(rng, (5,), "bias")
    return (lambda: _project(ad.layer_norm(x, g, b), 1)), [x, g, b]


def _case_softmax(rng):
    x = _leaf(rng, (2, 3, 4), "x")
    return (lambda: _project(ad.softmax(x, axis=-1), 2)), [x]


def _case_cross_entropy(rng):
    x = _leaf(rng, (5, 4), "logits")
    labels = rng.integers(0, 4, size=5)
    return (lambda: ad.cross_entropy(x, labels)), [x]


def _case_batched_matmul(rng):
    a, w = _leaf(rng, (2, 3, 4), "a"), _leaf(rng, (4, 5), "w")
    return (lambda: _project(ad.matmul(a, w), 3)), [a, w]


def _case_concat_slice(rng):
    a, b = _leaf(rng, (2, 1, 3), "a"), _leaf(rng, (2, 4, 3), "b")
    return (lambda: _project(ad.slice_(ad.concat([a, b], axis=1), (slice(None), 0)), 4)), [a, b]


def _case_attention_head(rng):
    q, k, v = _leaf(rng, (2, 4, 3), "q"), _leaf(rng, (2, 4, 3), "k"), _leaf(rng, (2, 4, 3), "v")
    return (lambda: _project(self_attention_head(q, k, v)[0], 5)), [q, k, v]


def _case_gelu_mean(rng):
    x = _leaf(rng, (3, 4), "x")
    return (lambda: _project(ad.mean(ad.gelu(x), axis=0), 6)), [x]


class TestGradcheck:
    @pytest.mark.parametrize(
        "make_case",
        [_case_layer_norm, _case_softmax, _case_cross_entropy, _case_batched_matmul,
         _case_concat_slice, _case_attention_head, _case_gelu_mean],
        ids=lambda f: f.__name__[len("_case_"):],
    )
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_analytic_matches_finite_difference(self, make_case, seed):
        with ad.precision("float64"):
            fn, inputs = make_case(np.random.default_rng(seed))
            results = ad.gradcheck(fn, inputs, tol=1e-4)
        worst = max(r.max_rel_error for r in results)
        assert all(r.passed for r in results), f"max relative error {worst:.2e}"

    def test_detects_wrong_gradient(self):
        with ad.precision("float64"):
            x = ad.Tensor(np.array([0.3, -0.7]), requires_grad=True, name="x")

            def broken():
                out = ad.sum_(x * x)
                # 前向值被替换为 x³ 的和，反向仍是 2x
                out.data = np.asarray(np.sum(x.data ** 3))
                return out

            results = ad.gradcheck(broken, [x])
        assert not results[0].passed
