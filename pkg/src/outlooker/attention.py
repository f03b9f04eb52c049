"""Token-mixing layers and the closed-form multiply-add model.

Four interchangeable layers over token maps:

* ``OutlookAttention``: each window's K²×K² mixing weights are *predicted*
  by a linear map from the window's (pooled) center token, softmaxed over the
  source-slot axis, applied to unfolded values, and scatter-added back.
* ``LocalSelfAttention``: dot-product attention restricted to each token's
  K×K neighborhood (padded positions masked out of the softmax).
* ``SelfAttention``: full scaled dot-product attention over a flat list.
* ``Conv2d``: K×K cross-correlation, expressed as unfold + linear.

``madds`` gives the closed-form cost of the three attention kinds at stride
1; ``measured_madds`` runs the instrumented counter for comparison.
"""

from __future__ import annotations

import math

import numpy as np

from . import ops
from .errors import GeometryError, ShapeError
from .tensor import MADD_COUNTER, Tensor, trunc_normal
from .windows import WindowGeometry, fold, in_bounds_mask, unfold

INIT_STD = 0.02


def _param(rng, shape, std, dtype) -> Tensor:
    return Tensor(trunc_normal(rng, shape, std, dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def _check_heads(channels: int, heads: int) -> None:
    if heads < 1 or channels % heads != 0:
        raise ShapeError(f"channels {channels} not divisible by heads {heads}")


class OutlookAttention:
    """Window attention whose mixing weights come from the center token.

    For every window center the layer maps the center token (the stride×stride
    mean-pooled token when stride > 1) to heads·K⁴ logits, reshapes them to
    heads × K² × K², softmaxes each row over the source slots, applies them to
    the unfolded value windows, and scatter-adds the K² result rows of every
    window back onto the full H×W grid before the output projection.
    The value projection carries no bias; the logit and output projections do.
    """

    kind = "oa"

    def __init__(self, rng, channels: int, heads: int, kernel: int = 3, stride: int = 1,
                 dtype=np.float32, std: float = INIT_STD):
        _check_heads(channels, heads)
        if kernel < 1 or kernel % 2 == 0:
            raise GeometryError(f"kernel must be odd and positive, got K={kernel}")
        if stride < 1:
            raise GeometryError(f"stride must be >= 1, got {stride}")
        self.channels = channels
        self.heads = heads
        self.kernel = kernel
        self.stride = stride
        k4 = kernel ** 4
        self.w_v = _param(rng, (channels, channels), std, dtype)
        self.w_a = _param(rng, (channels, heads * k4), std, dtype)
        self.b_a = _zeros(heads * k4, dtype)
        self.w_o = _param(rng, (channels, channels), std, dtype)
        self.b_o = _zeros(channels, dtype)

    def named_params(self):
        return [("w_v", self.w_v), ("w_a", self.w_a), ("b_a", self.b_a),
                ("w_o", self.w_o), ("b_o", self.b_o)]

    def attend(self, x: Tensor) -> Tensor:
        """Multi-head window aggregation, before the output projection."""
        if x.ndim != 3 or x.shape[2] != self.channels:
            raise ShapeError(f"expected (H, W, {self.channels}), got {x.shape}")
        height, width, channels = x.shape
        geom = WindowGeometry(height, width, self.kernel, self.stride)
        h, w = geom.out_height, geom.out_width
        k2 = self.kernel * self.kernel
        heads, cn = self.heads, channels // self.heads

        values = ops.linear(x, self.w_v)                      # (H, W, C)
        stack = unfold(values, geom)                          # (h·w, K², C)
        stack = ops.reshape(stack, (h * w, k2, heads, cn))
        stack = ops.permute(stack, (2, 0, 1, 3))              # (heads, h·w, K², cn)

        pooled = ops.avg_pool(x, self.stride)                 # identity at stride 1
        if pooled.shape[0] != h or pooled.shape[1] != w:
            raise GeometryError(
                f"pooled grid {pooled.shape[0]}x{pooled.shape[1]} does not match "
                f"window grid {h}x{w}; use the default padding"
            )
        logits = ops.linear(pooled, self.w_a, self.b_a)       # (h, w, heads·K⁴)
        logits = ops.reshape(logits, (h * w, heads, k2, k2))
        logits = ops.permute(logits, (1, 0, 2, 3))            # (heads, h·w, K², K²)
        attn = ops.softmax(logits, axis=-1)

        mixed = ops.matmul(attn, stack)                       # (heads, h·w, K², cn)
        mixed = ops.permute(mixed, (1, 2, 0, 3))
        mixed = ops.reshape(mixed, (h * w, k2, channels))
        return fold(mixed, geom)                              # (H, W, C)

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(self.attend(x), self.w_o, self.b_o)

    __call__ = forward


class LocalSelfAttention:
    """Dot-product attention restricted to each token's K×K neighborhood."""

    kind = "lsa"

    def __init__(self, rng, channels: int, heads: int, kernel: int = 3,
                 dtype=np.float32, std: float = INIT_STD):
        _check_heads(channels, heads)
        if kernel < 1 or kernel % 2 == 0:
            raise GeometryError(f"kernel must be odd and positive, got K={kernel}")
        self.channels = channels
        self.heads = heads
        self.kernel = kernel
        self.stride = 1
        for name in ("q", "k", "v", "o"):
            setattr(self, f"w_{name}", _param(rng, (channels, channels), std, dtype))
            setattr(self, f"b_{name}", _zeros(channels, dtype))

    def named_params(self):
        return [(f"{kind}_{name}", getattr(self, f"{kind}_{name}"))
                for name in ("q", "k", "v", "o") for kind in ("w", "b")]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.channels:
            raise ShapeError(f"expected (H, W, {self.channels}), got {x.shape}")
        height, width, channels = x.shape
        geom = WindowGeometry(height, width, self.kernel)
        hw = height * width
        k2 = self.kernel * self.kernel
        heads, dh = self.heads, channels // self.heads

        q = ops.linear(x, self.w_q, self.b_q)
        k = ops.linear(x, self.w_k, self.b_k)
        v = ops.linear(x, self.w_v, self.b_v)

        def to_heads(stack: Tensor) -> Tensor:
            stack = ops.reshape(stack, (hw, k2, heads, dh))
            return ops.permute(stack, (2, 0, 1, 3))           # (heads, hw, K², dh)

        keys = to_heads(unfold(k, geom))
        vals = to_heads(unfold(v, geom))
        queries = ops.permute(ops.reshape(q, (hw, heads, dh)), (1, 0, 2))
        queries = ops.reshape(queries, (heads, hw, 1, dh))

        scores = ops.matmul(queries, ops.permute(keys, (0, 1, 3, 2)))  # (heads, hw, 1, K²)
        scores = ops.scale(scores, 1.0 / math.sqrt(dh))
        # padded neighbors are struck from the softmax entirely
        neg = np.where(in_bounds_mask(geom), 0.0, -np.inf).astype(x.data.dtype)
        mask = Tensor(np.broadcast_to(neg[None, :, None, :], scores.shape).copy())
        attn = ops.softmax(ops.add(scores, mask), axis=-1)

        out = ops.matmul(attn, vals)                          # (heads, hw, 1, dh)
        out = ops.permute(out, (1, 2, 0, 3))
        out = ops.reshape(out, (height, width, channels))
        return ops.linear(out, self.w_o, self.b_o)

    __call__ = forward


class SelfAttention:
    """Scaled dot-product attention over a flat (L, C) token list."""

    kind = "sa"

    def __init__(self, rng, channels: int, heads: int, dtype=np.float32, std: float = INIT_STD):
        _check_heads(channels, heads)
        self.channels = channels
        self.heads = heads
        for name in ("q", "k", "v", "o"):
            setattr(self, f"w_{name}", _param(rng, (channels, channels), std, dtype))
            setattr(self, f"b_{name}", _zeros(channels, dtype))

    def named_params(self):
        return [(f"{kind}_{name}", getattr(self, f"{kind}_{name}"))
                for name in ("q", "k", "v", "o") for kind in ("w", "b")]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.channels:
            raise ShapeError(f"expected (L, {self.channels}), got {x.shape}")
        length, channels = x.shape
        heads, dh = self.heads, channels // self.heads

        def to_heads(t: Tensor) -> Tensor:
            return ops.permute(ops.reshape(t, (length, heads, dh)), (1, 0, 2))

        q = to_heads(ops.linear(x, self.w_q, self.b_q))       # (heads, L, dh)
        k = to_heads(ops.linear(x, self.w_k, self.b_k))
        v = to_heads(ops.linear(x, self.w_v, self.b_v))

        scores = ops.matmul(q, ops.permute(k, (0, 2, 1)))     # (heads, L, L)
        attn = ops.softmax(ops.scale(scores, 1.0 / math.sqrt(dh)), axis=-1)
        out = ops.matmul(attn, v)                             # (heads, L, dh)
        out = ops.reshape(ops.permute(out, (1, 0, 2)), (length, channels))
        return ops.linear(out, self.w_o, self.b_o)

    __call__ = forward


class Conv2d:
    """K×K cross-correlation with zero padding ⌊K/2⌋ and bias."""

    kind = "conv"

    def __init__(self, rng, kernel: int, cin: int, cout: int, stride: int = 1,
                 dtype=np.float32, std: float = INIT_STD):
        if kernel < 1 or kernel % 2 == 0:
            raise GeometryError(f"kernel must be odd and positive, got K={kernel}")
        self.kernel = kernel
        self.cin = cin
        self.cout = cout
        self.stride = stride
        self.weight = _param(rng, (kernel, kernel, cin, cout), std, dtype)
        self.bias = _zeros(cout, dtype)

    def named_params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[2] != self.cin:
            raise ShapeError(f"expected (H, W, {self.cin}), got {x.shape}")
        height, width, _ = x.shape
        geom = WindowGeometry(height, width, self.kernel, self.stride)
        k2 = self.kernel * self.kernel
        stack = unfold(x, geom)                               # (h·w, K², Cin)
        flat = ops.reshape(stack, (geom.windows, k2 * self.cin))
        wmat = ops.reshape(self.weight, (k2 * self.cin, self.cout))
        out = ops.linear(flat, wmat, self.bias)
        return ops.reshape(out, (geom.out_height, geom.out_width, self.cout))

    __call__ = forward


# ---------------------------------------------------------------------------
# analytic cost model

from dataclasses import dataclass


@dataclass(frozen=True)
class CostQuery:
    """Shape of a standalone stride-1 layer for the closed-form cost model."""

    height: int
    width: int
    channels: int
    kernel: int = 3
    heads: int = 6

    def __post_init__(self):
        for name in ("height", "width", "channels", "kernel", "heads"):
            if getattr(self, name) < 1:
                raise ShapeError(f"CostQuery.{name} must be positive")


LAYER_KINDS = ("oa", "lsa", "sa", "conv")


def madds(query: CostQuery, kind: str) -> int:
    """Closed-form multiply-add count of one stride-1 layer forward pass.

    sa:  4·HWC² + 2·(HW)²·C
    lsa: 4·HWC² + 2·HW·K²·C
    oa:  HWC·(2C + N·K⁴) + HW·K²·C
    conv: HW·K²·C² (same-width cross-correlation)

    The attention formulas ignore softmax (and, for oa, count the aggregation
    as a single K²·C sweep per location); ``measured_madds`` reports what the
    instrumented counter actually sees.
    """
    hw = query.height * query.width
    c = query.channels
    k2 = query.kernel * query.kernel
    if kind == "sa":
        return 4 * hw * c * c + 2 * hw * hw * c
    if kind == "lsa":
        return 4 * hw * c * c + 2 * hw * k2 * c
    if kind == "oa":
        return hw * c * (2 * c + query.heads * k2 * k2) + hw * k2 * c
    if kind == "conv":
        return hw * k2 * c * c
    raise ShapeError(f"unknown layer kind {kind!r}; expected one of {LAYER_KINDS}")


def build_layer(kind: str, query: CostQuery, rng, dtype=np.float64):
    """Instantiate the layer a CostQuery describes (square-channel, stride 1)."""
    if kind == "oa":
        return OutlookAttention(rng, query.channels, query.heads, query.kernel, dtype=dtype)
    if kind == "lsa":
        return LocalSelfAttention(rng, query.channels, query.heads, query.kernel, dtype=dtype)
    if kind == "sa":
        return SelfAttention(rng, query.channels, query.heads, dtype=dtype)
    if kind == "conv":
        return Conv2d(rng, query.kernel, query.channels, query.channels, dtype=dtype)
    raise ShapeError(f"unknown layer kind {kind!r}; expected one of {LAYER_KINDS}")


def layer_input(kind: str, query: CostQuery, rng, dtype=np.float64) -> Tensor:
    shape = (
        (query.height * query.width, query.channels)
        if kind == "sa"
        else (query.height, query.width, query.channels)
    )
    return Tensor(rng.standard_normal(shape), dtype=dtype)


def measured_madds(layer, x: Tensor) -> int:
    """Multiply-adds accumulated by one forward pass of ``layer`` on ``x``."""
    start = MADD_COUNTER.total
    layer.forward(x)
    return MADD_COUNTER.total - start
