"""Tensors, the gradient tape, and the multiply-add counter.

The autodiff model is a classic Wengert list: while a ``Tape`` is active,
every primitive records the tensors it read, the tensor it produced, and a
closure mapping the output gradient to input gradients.  ``backward`` replays
the list in reverse.  Recording order is a topological order of the
computation (an input must exist before an op can consume it), so the reverse
replay is an exact reverse topological order and each node's output gradient
is complete before the node runs.

Only ``matmul``/``linear`` style primitives feed ``MADD_COUNTER`` (see
``ops``); the counter is the single piece of shared mutable state in the
library and is lock-protected.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
DEFAULT_DTYPE = np.float32


class Tensor:
    """A contiguous n-d float array plus a gradient slot.

    Values are immutable by convention once created.  The two sanctioned
    mutations are gradient accumulation (``backward`` writes ``grad``) and
    optimizer updates to parameter buffers between steps.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in SUPPORTED_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.dtype not in SUPPORTED_DTYPES:
            raise ContractError(
                f"unsupported element type {arr.dtype}; use float32 or float64"
            )
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # Light arithmetic sugar; the real work lives in ops.
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications, replayed in reverse.

    A tape is single-threaded: enter it as a context manager, run the forward
    computation inside, then call ``backward(loss, tape)``.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("tape stack corrupted: exited a tape that is not innermost")
        stack.pop()
        return False

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn) -> None:
        self._nodes.append(_Node(tuple(inputs), output, backward_fn))

    def __len__(self) -> int:
        return len(self._nodes)


_LOCAL = threading.local()


def _tape_stack() -> list[Tape]:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def record(inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn) -> None:
    """Record one primitive application on the innermost active tape, if any.

    No-op when no tape is active (inference) or when no input requires
    gradients (the node could never receive a pull).
    """
    tape = active_tape()
    if tape is not None and output.requires_grad:
        tape.record(inputs, output, backward_fn)


def from_op(data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap an op result, propagating requires_grad and recording the node."""
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs), dtype=data.dtype)
    record(inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> dict[Tensor, np.ndarray]:
    """Accumulate gradients of a scalar ``loss`` over ``tape``.

    Returns a map from every requires_grad tensor that appears on the tape to
    its gradient (zeros if the loss does not depend on it); the same array is
    also stored on ``tensor.grad``.  Raises ``ContractError`` for a non-scalar
    loss.
    """
    if not isinstance(loss, Tensor):
        raise ContractError(f"loss must be a Tensor, got {type(loss).__name__}")
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    participants: dict[int, Tensor] = {}
    if loss.requires_grad:
        participants[id(loss)] = loss
    for node in tape._nodes:
        for t in node.inputs:
            if t.requires_grad:
                participants.setdefault(id(t), t)
        if node.output.requires_grad:
            participants.setdefault(id(node.output), node.output)

    for node in reversed(tape._nodes):
        out_grad = grads.get(id(node.output))
        if out_grad is None:
            continue
        in_grads = node.backward_fn(out_grad)
        if len(in_grads) != len(node.inputs):
            raise ContractError(
                f"backward closure returned {len(in_grads)} gradients for "
                f"{len(node.inputs)} inputs"
            )
        for t, g in zip(node.inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.data.shape:
                raise ContractError(
                    f"gradient shape {g.shape} does not match tensor shape {t.data.shape}"
                )
            acc = grads.get(id(t))
            grads[id(t)] = g if acc is None else acc + g

    result: dict[Tensor, np.ndarray] = {}
    for tid, t in participants.items():
        g = grads.get(tid)
        if g is None:
            g = np.zeros_like(t.data)
        t.grad = g
        result[t] = g
    return result


class MAddCounter:
    """Thread-safe accumulator of multiply-add counts.

    Monotone non-decreasing between explicit resets.  Only matmul/linear
    primitives add to it; softmax, normalization, and elementwise work do not.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._total = 0

    def add(self, count: int) -> None:
        count = int(count)
        if count < 0:
            raise ContractError(f"negative multiply-add count {count}")
        with self._lock:
            self._total += count

    def reset(self) -> None:
        with self._lock:
            self._total = 0

    @property
    def total(self) -> int:
        with self._lock:
            return self._total


MADD_COUNTER = MAddCounter()


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Normal(0, std) samples re-drawn (then clipped) to lie within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    for _ in range(8):
        bad = np.abs(out) > 2.0 * std
        if not bad.any():
            break
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
    np.clip(out, -2.0 * std, 2.0 * std, out=out)
    return out.astype(dtype)
