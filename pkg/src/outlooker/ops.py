"""Differentiable primitives.

Every function takes and returns ``Tensor``s, computes the forward value with
numpy, and registers a backward closure on the active tape (see ``tensor``).
Shape checks are strict: elementwise ops require identical shapes, batched
``matmul`` requires identical leading dims.  Scalar constants are plain
python floats so float32 data stays float32.

Only ``matmul`` and ``linear`` feed the multiply-add counter: a matmul of
(m, k) @ (k, n) adds exactly m*k*n (times the batch size), a linear adds
(#tokens)*Cin*Cout.  Softmax, normalization, and elementwise work are
excluded from counting on purpose.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .errors import ContractError, ShapeError
from .tensor import MADD_COUNTER, Tensor, from_op

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _leading(shape: tuple[int, ...], keep: int) -> int:
    n = 1
    for d in shape[: len(shape) - keep]:
        n *= int(d)
    return n


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product ``a @ b``.

    ``a``: (..., m, k), ``b``: (..., k, n) with identical leading dims.
    Counts prod(leading)*m*k*n multiply-adds.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul operands do not align: {a.shape} @ {b.shape}")
    data = a.data @ b.data
    m, k = int(a.shape[-2]), int(a.shape[-1])
    n = int(b.shape[-1])
    MADD_COUNTER.add(_leading(a.shape, 2) * m * k * n)

    def backward_fn(g):
        return (g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g)

    return from_op(data, (a, b), backward_fn)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x @ w (+ b)``.

    ``x``: (..., Cin), ``w``: (Cin, Cout), ``b``: (Cout,).  Counts
    (#tokens)*Cin*Cout multiply-adds where #tokens = prod of leading dims.
    """
    if w.ndim != 2:
        raise ShapeError(f"linear weight must be rank 2, got {w.shape}")
    if x.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear operands do not align: {x.shape} @ {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear bias shape {b.shape} does not match weight {w.shape}")
    cin, cout = int(w.shape[0]), int(w.shape[1])
    data = x.data @ w.data
    if b is not None:
        data = data + b.data
    MADD_COUNTER.add(_leading(x.shape, 1) * cin * cout)

    def backward_fn(g):
        gx = g @ w.data.T
        g2 = g.reshape(-1, cout)
        gw = x.data.reshape(-1, cin).T @ g2
        if b is None:
            return (gx, gw)
        return (gx, gw, g2.sum(axis=0))

    inputs = (x, w) if b is None else (x, w, b)
    return from_op(data, inputs, backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    return from_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    return from_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    return from_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar."""
    factor = float(factor)
    return from_op(x.data * factor, (x,), lambda g: (g * factor,))


def reshape(x: Tensor, shape) -> Tensor:
    """Row-major reindex to a new shape with the same number of elements."""
    data = x.data.reshape(shape)

    def backward_fn(g):
        return (np.reshape(g, x.shape),)

    return from_op(data, (x,), backward_fn)


def permute(x: Tensor, axes) -> Tensor:
    """Transpose to a new axis order; the result is materialized contiguously."""
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute axes {axes} invalid for rank {x.ndim}")
    data = np.ascontiguousarray(x.data.transpose(axes))
    inv = tuple(int(i) for i in np.argsort(axes))

    def backward_fn(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return from_op(data, (x,), backward_fn)


def concat(tensors, axis: int = 0) -> Tensor:
    """Concatenate tensors along an existing axis."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return from_op(data, tuple(tensors), backward_fn)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """A contiguous slab ``[start, start+length)`` along ``axis``."""
    if not (0 <= axis < x.ndim):
        raise ShapeError(f"narrow axis {axis} invalid for rank {x.ndim}")
    if not (0 <= start and start + length <= x.shape[axis] and length > 0):
        raise ShapeError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} of {x.shape}"
        )
    index = (slice(None),) * axis + (slice(start, start + length),)
    data = x.data[index]

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return from_op(data, (x,), backward_fn)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Exponential normalization along ``axis``; slices sum to one.

    Computed as exp(x - max)/sum for overflow safety; ``-inf`` entries (used
    for masking) receive exactly zero weight.
    """
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        dot = np.sum(g * s, axis=axis, keepdims=True)
        return (s * (g - dot),)

    return from_op(s, (x,), backward_fn)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Log of softmax, computed stably as (x - max) - log(sum(exp))."""
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    out = z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))

    def backward_fn(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return from_op(out, (x,), backward_fn)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift.

    Variance uses the biased (1/C) estimator.  With eps > 0 a constant row
    maps to beta exactly.
    """
    eps = float(eps)
    if eps < 0.0:
        raise ContractError(f"layer_norm eps must be >= 0, got {eps}")
    c = x.shape[-1] if x.ndim else 0
    if x.ndim < 1 or gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layer_norm shapes do not align: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward_fn(g):
        gg = g * gamma.data
        m1 = gg.mean(axis=-1, keepdims=True)
        m2 = np.mean(gg * xhat, axis=-1, keepdims=True)
        gx = inv * (gg - m1 - xhat * m2)
        ggamma = (g * xhat).reshape(-1, c).sum(axis=0)
        gbeta = g.reshape(-1, c).sum(axis=0)
        return (gx, ggamma, gbeta)

    return from_op(out, (x, gamma, beta), backward_fn)


def gelu(x: Tensor) -> Tensor:
    """Gaussian-error linear unit, exact erf form: x * Phi(x)."""
    d = x.data
    phi = 0.5 * (1.0 + erf(d * _INV_SQRT2))

    def backward_fn(g):
        pdf = np.exp(-0.5 * d * d) * _INV_SQRT_2PI
        return (g * (phi + d * pdf),)

    return from_op(d * phi, (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, as a rank-0 tensor."""
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward_fn(g):
        return (np.ones_like(x.data) * g,)

    return from_op(data, (x,), backward_fn)


def avg_pool(x: Tensor, stride: int) -> Tensor:
    """Non-overlapping stride×stride mean over the two leading spatial axes.

    ``x``: (H, W, C) → (ceil(H/s), ceil(W/s), C).  Edge cells average over
    in-bounds entries only, so padding never leaks values in.
    """
    stride = int(stride)
    if stride < 1:
        raise ShapeError(f"avg_pool stride must be >= 1, got {stride}")
    if x.ndim != 3:
        raise ShapeError(f"avg_pool expects (H, W, C), got {x.shape}")
    if stride == 1:
        return x
    height, width, _ = x.shape
    h = -(-height // stride)
    w = -(-width // stride)
    counts_h = np.minimum(stride, height - stride * np.arange(h))
    counts_w = np.minimum(stride, width - stride * np.arange(w))
    counts = np.outer(counts_h, counts_w).astype(x.data.dtype)[:, :, None]
    acc = np.zeros((h, w, x.shape[2]), dtype=x.data.dtype)
    for a in range(stride):
        for b in range(stride):
            sub = x.data[a::stride, b::stride, :]
            acc[: sub.shape[0], : sub.shape[1], :] += sub
    out = acc / counts

    def backward_fn(g):
        gs = g / counts
        gx = np.zeros_like(x.data)
        for a in range(stride):
            for b in range(stride):
                view = gx[a::stride, b::stride, :]
                view += gs[: view.shape[0], : view.shape[1], :]
        return (gx,)

    return from_op(out, (x,), backward_fn)
