# -*- coding: utf-8 -*-
"""
EMGTTL：一维 patch Transformer 分类器

patchify -> 线性 patch 嵌入 + class token + 位置嵌入 -> L 层 pre-norm 编码器（h 头自注意力 + MLP）
-> class token 的最终 LayerNorm -> 分类头 MLP
"""

import logging
import math
from collections import OrderedDict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import truncnorm

from pipelines.emgttl.errors import ConfigurationError, ShapeError
from pipelines.emgttl.modules.autodiff import (
    Parameter,
    Tensor,
    add,
    add_embedding,
    concat,
    dropout,
    expand,
    gelu,
    get_default_dtype,
    layer_norm,
    linear,
    matmul,
    reshape,
    scale,
    slice_,
    softmax,
    transpose,
)
from pipelines.emgttl.modules.model.config import ModelConfig, parameter_layout
from tools.hashing import get_arrays_sha256

logger = logging.getLogger(__name__)

INIT_STD = 0.02
INIT_TRUNCATION = 3.0
HEAD_PREFIX = "head."

ArrayOrTensor = Union[np.ndarray, Tensor]


# ==================== 纯函数组件 ====================

def patchify(X: np.ndarray, channels: int) -> np.ndarray:
    """
    将 [..., C, W] 切为 N = W/C 个 C×C 块，按通道优先展平为长度 C² 的向量

    Returns:
        np.ndarray: [..., N, C²]

    Raises:
        ConfigurationError: W 不能被 C 整除
    """
    X = np.asarray(X)
    if X.shape[-2] != channels:
        raise ShapeError(f"patchify: expected {channels} channels, got input shape {X.shape}")
    width = X.shape[-1]
    if width % channels:
        raise ConfigurationError(f"patchify: W mod C = {width % channels} (W={width}, C={channels})")
    lead = X.shape[:-2]
    n = width // channels
    blocks = X.reshape(lead + (channels, n, channels))
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return np.ascontiguousarray(np.transpose(blocks, axes)).reshape(lead + (n, channels * channels))


def unpatchify(patches: np.ndarray, channels: int) -> np.ndarray:
    """patchify 的逆：[..., N, C²] -> [..., C, N·C]。"""
    patches = np.asarray(patches)
    lead = patches.shape[:-2]
    n = patches.shape[-2]
    blocks = patches.reshape(lead + (n, channels, channels))
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return np.ascontiguousarray(np.transpose(blocks, axes)).reshape(lead + (channels, n * channels))


def sinusoidal_table(tokens: int, dim: int) -> np.ndarray:
    """固定正弦位置编码：偶数列 sin，奇数列 cos。"""
    positions = np.arange(tokens)[:, None]
    rates = np.power(10000.0, -(2 * (np.arange(dim) // 2)) / dim)[None, :]
    angles = positions * rates
    table = np.empty((tokens, dim))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


def _swap_last(x: Tensor) -> Tensor:
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return transpose(x, axes)


def self_attention_head(q: Tensor, k: Tensor, v: Tensor) -> Tuple[Tensor, Tensor]:
    """
    softmax(Q·Kᵀ / √d_h)·V，支持任意前导维

    Args:
        q, k, v: [..., T, d_h]

    Returns:
        (output [..., T, d_h], attention [..., T, T])
    """
    if not q.shape == k.shape == v.shape:
        raise ShapeError(f"self_attention_head: q {q.shape}, k {k.shape}, v {v.shape} must agree")
    scores = scale(matmul(q, _swap_last(k)), 1.0 / math.sqrt(q.shape[-1]))
    attention = softmax(scores, axis=-1)
    return matmul(attention, v), attention


def init_weights(config: ModelConfig, seed: int = 0, dtype=None) -> "OrderedDict[str, Parameter]":
    """
    初始化全部参数：线性权重截断正态（±3σ，σ=0.02），偏置 0，LayerNorm 增益 1，
    class token 与可学习位置嵌入 N(0, 0.02²)。相同 seed 逐比特相同。
    """
    dtype = dtype or get_default_dtype()
    rng = np.random.default_rng(seed)
    params: "OrderedDict[str, Parameter]" = OrderedDict()
    for name, shape, kind in parameter_layout(config):
        if kind == "trunc":
            data = truncnorm.rvs(-INIT_TRUNCATION, INIT_TRUNCATION, loc=0.0, scale=INIT_STD, size=shape, random_state=rng)
        elif kind == "normal":
            data = rng.normal(0.0, INIT_STD, size=shape)
        elif kind == "ones":
            data = np.ones(shape)
        elif kind == "sinusoid":
            data = sinusoidal_table(*shape)
        else:
            data = np.zeros(shape)
        params[name] = Parameter(name, np.asarray(data).reshape(shape), trainable=kind != "sinusoid", dtype=dtype)
    return params


# ==================== 模型 ====================

class EMGTTLModel:
    """
    EMGTTL 模型（参数容器 + 前向计算）

    推理时权重只读，可在多个线程间共享；训练时只有一个写者。

    Usage:
        model = EMGTTLModel.initialize(config, seed=0)
        logits = model.forward(X_batch, training=False)
    """

    def __init__(self, config: ModelConfig, params: "OrderedDict[str, Parameter]"):
        expected = [(name, shape) for name, shape, _ in parameter_layout(config)]
        actual = [(name, tuple(p.shape)) for name, p in params.items()]
        if sorted(expected) != sorted(actual):
            missing = sorted({n for n, _ in expected} ^ {n for n, _ in actual})
            raise ShapeError(f"Parameters do not match config layout (differing: {missing or 'shapes'})")
        self.config = config
        self.params = OrderedDict((name, params[name]) for name, _ in expected)
        self.logger = logging.getLogger(self.__class__.__name__)

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, dtype=None) -> "EMGTTLModel":
        return cls(config, init_weights(config, seed, dtype))

    # ---------- 参数访问 ----------

    @property
    def dtype(self):
        return self.params["embed.E"].dtype

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.params.values() if p.trainable]

    def head_names(self) -> List[str]:
        return [name for name in self.params if name.startswith(HEAD_PREFIX)]

    def encoder_names(self) -> List[str]:
        return [name for name in self.params if not name.startswith(HEAD_PREFIX)]

    def fixed_names(self) -> List[str]:
        """不参与训练的固定参数（正弦位置编码）。"""
        return ["embed.E_pos"] if self.config.pos_embedding == "sinusoidal" else []

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def weights_hash(self, names: Optional[Iterable[str]] = None) -> str:
        """权重 SHA-256（默认全部参数，按布局顺序）。"""
        selected = list(names) if names is not None else list(self.params)
        return get_arrays_sha256((name, self.params[name].data) for name in selected)

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data) for name, p in self.params.items())

    # ---------- 前向 ----------

    def _as_batch(self, X: ArrayOrTensor) -> Tuple[np.ndarray, bool]:
        data = X.data if isinstance(X, Tensor) else np.asarray(X)
        single = data.ndim == 2
        if single:
            data = data[None]
        if data.ndim != 3 or data.shape[1:] != (self.config.channels, self.config.window):
            raise ShapeError(
                f"Input shape {tuple(np.shape(X))} does not match model geometry C={self.config.channels}, W={self.config.window}"
            )
        return data.astype(self.dtype, copy=False), single

    def embed(self, patches: Tensor, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Z_0 = [x_cls; x_1ᵖE; ...; x_NᵖE] + E_pos

        Args:
            patches: [B, N, C²]

        Returns:
            Tensor: [B, N+1, d]
        """
        cfg = self.config
        if patches.shape[-2:] != (cfg.num_patches, cfg.patch_dim):
            raise ShapeError(f"embed: patches {patches.shape} vs expected (*, {cfg.num_patches}, {cfg.patch_dim})")
        batch = patches.shape[0]
        tokens = matmul(patches, self.params["embed.E"])
        cls = expand(reshape(self.params["embed.x_cls"], (1, cfg.embed_dim)), (batch,))
        z = add_embedding(concat([cls, tokens], axis=1), self.params["embed.E_pos"])
        return dropout(z, cfg.dropout_p, training, rng)

    def msa(self, z: Tensor, layer: int) -> Tuple[Tensor, Tensor]:
        """
        h 头自注意力：Q' = Z·W_q 等按列切成 h 块，逐头注意力后拼接再乘 W_msa

        Returns:
            (output [B, T, d], attention [B, h, T, T])
        """
        cfg = self.config
        prefix = f"encoder.{layer}.attn"
        batch, tokens, _ = z.shape

        def split_heads(x: Tensor) -> Tensor:
            return transpose(reshape(x, (batch, tokens, cfg.num_heads, cfg.head_dim)), (0, 2, 1, 3))

        q = split_heads(matmul(z, self.params[f"{prefix}.W_q"]))
        k = split_heads(matmul(z, self.params[f"{prefix}.W_k"]))
        v = split_heads(matmul(z, self.params[f"{prefix}.W_v"]))
        heads, attention = self_attention_head(q, k, v)
        merged = reshape(transpose(heads, (0, 2, 1, 3)), (batch, tokens, cfg.num_heads * cfg.head_dim))
        return linear(merged, self.params[f"{prefix}.W_msa"], self.params[f"{prefix}.b_msa"]), attention

    def _mlp(self, x: Tensor, layer: int, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
        prefix = f"encoder.{layer}.mlp"
        p = self.config.dropout_p
        x = dropout(gelu(linear(x, self.params[f"{prefix}.fc1.weight"], self.params[f"{prefix}.fc1.bias"])), p, training, rng)
        if self.config.encoder_mlp_depth == 2:
            x = dropout(gelu(linear(x, self.params[f"{prefix}.fc2.weight"], self.params[f"{prefix}.fc2.bias"])), p, training, rng)
        return linear(x, self.params[f"{prefix}.out.weight"], self.params[f"{prefix}.out.bias"])

    def encoder_layer(
        self, z: Tensor, layer: int, training: bool = False, rng: Optional[np.random.Generator] = None
    ) -> Tuple[Tensor, Tensor]:
        """
        pre-norm 残差：Z' = MSA(LN(Z)) + Z；Z_out = MLP(LN(Z')) + Z'

        Returns:
            (Z_out, 该层注意力矩阵)
        """
        prefix = f"encoder.{layer}"
        normed = layer_norm(z, self.params[f"{prefix}.ln1.gain"], self.params[f"{prefix}.ln1.bias"])
        attended, attention = self.msa(normed, layer)
        z = add(z, attended)
        normed = layer_norm(z, self.params[f"{prefix}.ln2.gain"], self.params[f"{prefix}.ln2.bias"])
        return add(z, self._mlp(normed, layer, training, rng)), attention

    def encode(
        self, X: ArrayOrTensor, training: bool = False, rng: Optional[np.random.Generator] = None
    ) -> Tuple[Tensor, List[np.ndarray]]:
        """patchify -> embed -> L 层编码器 -> class token 的 LayerNorm，返回 ([B, d], 各层注意力)。"""
        data, _ = self._as_batch(X)
        z = self.embed(Tensor(patchify(data, self.config.channels), dtype=self.dtype), training, rng)
        attentions = []
        for layer in range(self.config.num_layers):
            z, attention = self.encoder_layer(z, layer, training, rng)
            attentions.append(attention.data)
        cls = slice_(z, (slice(None), 0))
        return layer_norm(cls, self.params["norm.gain"], self.params["norm.bias"]), attentions

    def head(self, features: Tensor) -> Tensor:
        """d -> head_hidden₁ -> GELU -> head_hidden₂ -> GELU -> K"""
        x = gelu(linear(features, self.params["head.fc1.weight"], self.params["head.fc1.bias"]))
        x = gelu(linear(x, self.params["head.fc2.weight"], self.params["head.fc2.bias"]))
        return linear(x, self.params["head.out.weight"], self.params["head.out.bias"])

    def forward(
        self,
        X: ArrayOrTensor,
        training: bool = False,
        seed: Optional[Union[int, np.random.Generator]] = None,
        return_attention: bool = False,
    ):
        """
        前向计算

        Args:
            X: [C, W] 单个片段或 [B, C, W] 批次
            training: True 时启用 dropout
            seed: dropout 随机种子（推理模式下无影响）
            return_attention: 同时返回每层 [B, h, T, T] 注意力概率

        Returns:
            Tensor: [B, K] logits（单个片段输入时为 [K]），
            return_attention=True 时返回 (logits, List[np.ndarray])

        Raises:
            ShapeError: 输入与 C、W 不符
        """
        _, single = self._as_batch(X)
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        features, attentions = self.encode(X, training, rng)
        logits = self.head(features)
        if single:
            logits = reshape(logits, (self.config.num_classes,))
        return (logits, attentions) if return_attention else logits

    __call__ = forward

    def predict(self, X: ArrayOrTensor) -> np.ndarray:
        """推理模式 argmax，并列时取最小类别索引。"""
        logits = self.forward(X, training=False).data
        return np.argmax(np.atleast_2d(logits), axis=-1)

    def __repr__(self) -> str:
        cfg = self.config
        return (
            f"EMGTTLModel(C={cfg.channels}, W={cfg.window}, d={cfg.embed_dim}, L={cfg.num_layers}, "
            f"h={cfg.num_heads}, K={cfg.num_classes}, params={self.param_count()})"
        )
