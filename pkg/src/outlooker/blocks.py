"""Residual blocks: pre-norm token mixing + MLP, and stochastic depth.

Every block computes ``x + mix(norm(x))`` followed by ``y + mlp(norm(y))``.
During training each residual branch can be dropped per sample (stochastic
depth): a kept branch is scaled by 1/(1-rate) so the expectation matches
inference, where dropping is disabled entirely.
"""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .attention import Conv2d, LocalSelfAttention, OutlookAttention, SelfAttention, _param, _zeros
from .errors import ContractError, ShapeError
from .tensor import Tensor

INIT_STD = 0.02


def mlp_hidden(channels: int, ratio: float) -> int:
    """Hidden width ratio·C, required to be an exact integer."""
    hidden = channels * ratio
    rounded = int(round(hidden))
    if abs(hidden - rounded) > 1e-9 or rounded < 1:
        raise ShapeError(f"mlp ratio {ratio} times width {channels} is not a positive integer")
    return rounded


def stochastic_depth_mask(rate: float, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Per-sample keep mask: 0 with probability ``rate``, else 1/(1-rate)."""
    rate = float(rate)
    if not (0.0 <= rate < 1.0):
        raise ContractError(f"drop rate must be in [0, 1), got {rate}")
    if batch < 1:
        raise ContractError(f"batch must be >= 1, got {batch}")
    keep = rng.random(batch) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


class LayerNorm:
    """Learnable scale/shift around last-axis normalization."""

    def __init__(self, channels: int, eps: float = 1e-5, dtype=np.float32):
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)

    def named_params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)

    __call__ = forward


class Mlp:
    """linear → gelu → linear, hidden width = ratio × channels."""

    def __init__(self, rng, channels: int, ratio: float, dtype=np.float32, std: float = INIT_STD):
        hidden = mlp_hidden(channels, ratio)
        self.w1 = _param(rng, (channels, hidden), std, dtype)
        self.b1 = _zeros(hidden, dtype)
        self.w2 = _param(rng, (hidden, channels), std, dtype)
        self.b2 = _zeros(channels, dtype)

    def named_params(self):
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(ops.gelu(ops.linear(x, self.w1, self.b1)), self.w2, self.b2)

    __call__ = forward


def _child_params(pairs):
    out = []
    for prefix, module in pairs:
        out += [(f"{prefix}.{name}", p) for name, p in module.named_params()]
    return out


class _ResidualBlock:
    """Shared plumbing: two pre-norm residual branches with optional drop."""

    def __init__(self, mixer, rng, channels, mlp_ratio, drop_path, dtype, std):
        self.norm1 = LayerNorm(channels, dtype=dtype)
        self.mixer = mixer
        self.norm2 = LayerNorm(channels, dtype=dtype)
        self.mlp = Mlp(rng, channels, mlp_ratio, dtype=dtype, std=std)
        if not (0.0 <= drop_path < 1.0):
            raise ContractError(f"drop_path must be in [0, 1), got {drop_path}")
        self.drop_path = float(drop_path)

    def named_params(self):
        return _child_params(
            [("norm1", self.norm1), ("mixer", self.mixer), ("norm2", self.norm2), ("mlp", self.mlp)]
        )

    def _branch(self, t: Tensor, training: bool, rng) -> Tensor:
        if not training or self.drop_path == 0.0:
            return t
        if rng is None:
            raise ContractError("training forward with drop_path > 0 needs an rng")
        factor = float(stochastic_depth_mask(self.drop_path, 1, rng)[0])
        return ops.scale(t, factor)

    def forward(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        y = ops.add(x, self._branch(self.mixer(self.norm1(x)), training, rng))
        return ops.add(y, self._branch(self.mlp(self.norm2(y)), training, rng))

    __call__ = forward


class OutlookerBlock(_ResidualBlock):
    """Outlook attention + MLP residual pair on an (H, W, C) map."""

    def __init__(self, rng, channels: int, heads: int, kernel: int = 3, stride: int = 1,
                 mlp_ratio: float = 3.0, drop_path: float = 0.0,
                 dtype=np.float32, std: float = INIT_STD):
        mixer = OutlookAttention(rng, channels, heads, kernel, stride, dtype=dtype, std=std)
        super().__init__(mixer, rng, channels, mlp_ratio, drop_path, dtype, std)


class LocalAttentionBlock(_ResidualBlock):
    """Neighborhood self-attention + MLP residual pair on an (H, W, C) map."""

    def __init__(self, rng, channels: int, heads: int, kernel: int = 3,
                 mlp_ratio: float = 3.0, drop_path: float = 0.0,
                 dtype=np.float32, std: float = INIT_STD):
        mixer = LocalSelfAttention(rng, channels, heads, kernel, dtype=dtype, std=std)
        super().__init__(mixer, rng, channels, mlp_ratio, drop_path, dtype, std)


class ConvBlock(_ResidualBlock):
    """Same-width convolution + MLP residual pair on an (H, W, C) map."""

    def __init__(self, rng, channels: int, kernel: int = 3,
                 mlp_ratio: float = 3.0, drop_path: float = 0.0,
                 dtype=np.float32, std: float = INIT_STD):
        mixer = Conv2d(rng, kernel, channels, channels, dtype=dtype, std=std)
        super().__init__(mixer, rng, channels, mlp_ratio, drop_path, dtype, std)


class TransformerBlock(_ResidualBlock):
    """Full self-attention + MLP residual pair on an (L, C) token list."""

    def __init__(self, rng, channels: int, heads: int, mlp_ratio: float = 3.0,
                 drop_path: float = 0.0, dtype=np.float32, std: float = INIT_STD):
        mixer = SelfAttention(rng, channels, heads, dtype=dtype, std=std)
        super().__init__(mixer, rng, channels, mlp_ratio, drop_path, dtype, std)


class ClassAttentionBlock:
    """Updates the class token by attending over [class ∥ patch] tokens.

    Only the class token forms a query; patch tokens pass through unchanged.
    The class token takes the attention residual, then its own MLP residual.
    """

    def __init__(self, rng, channels: int, heads: int, mlp_ratio: float = 3.0,
                 dtype=np.float32, std: float = INIT_STD):
        if heads < 1 or channels % heads != 0:
            raise ShapeError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.norm1 = LayerNorm(channels, dtype=dtype)
        for name in ("q", "k", "v", "o"):
            setattr(self, f"w_{name}", _param(rng, (channels, channels), std, dtype))
            setattr(self, f"b_{name}", _zeros(channels, dtype))
        self.norm2 = LayerNorm(channels, dtype=dtype)
        self.mlp = Mlp(rng, channels, mlp_ratio, dtype=dtype, std=std)

    def named_params(self):
        own = [(f"{kind}_{name}", getattr(self, f"{kind}_{name}"))
               for name in ("q", "k", "v", "o") for kind in ("w", "b")]
        return _child_params([("norm1", self.norm1)]) + own + _child_params(
            [("norm2", self.norm2), ("mlp", self.mlp)]
        )

    def forward(self, cls_token: Tensor, patches: Tensor) -> Tensor:
        if cls_token.shape != (1, self.channels):
            raise ShapeError(f"expected class token (1, {self.channels}), got {cls_token.shape}")
        if patches.ndim != 2 or patches.shape[1] != self.channels:
            raise ShapeError(f"expected patches (L, {self.channels}), got {patches.shape}")
        length = patches.shape[0] + 1
        heads, dh = self.heads, self.channels // self.heads

        full = ops.concat([cls_token, patches], axis=0)       # (L+1, C)
        u = self.norm1(full)
        q = ops.linear(ops.narrow(u, 0, 0, 1), self.w_q, self.b_q)
        q = ops.permute(ops.reshape(q, (1, heads, dh)), (1, 0, 2))        # (heads, 1, dh)
        k = ops.permute(ops.reshape(ops.linear(u, self.w_k, self.b_k), (length, heads, dh)), (1, 0, 2))
        v = ops.permute(ops.reshape(ops.linear(u, self.w_v, self.b_v), (length, heads, dh)), (1, 0, 2))

        scores = ops.matmul(q, ops.permute(k, (0, 2, 1)))     # (heads, 1, L+1)
        attn = ops.softmax(ops.scale(scores, 1.0 / math.sqrt(dh)), axis=-1)
        out = ops.matmul(attn, v)                             # (heads, 1, dh)
        out = ops.reshape(ops.permute(out, (1, 0, 2)), (1, self.channels))
        out = ops.linear(out, self.w_o, self.b_o)

        cls = ops.add(cls_token, out)
        return ops.add(cls, self.mlp(self.norm2(cls)))

    __call__ = forward


def drop_path_schedule(max_rate: float, depth: int) -> list[float]:
    """Linear ramp 0 → max_rate across a stack of ``depth`` blocks."""
    if depth < 1:
        return []
    if depth == 1:
        return [0.0]
    return [max_rate * i / (depth - 1) for i in range(depth)]
