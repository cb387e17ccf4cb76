"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: it implements exactly the operations the
forecasting model needs (elementwise arithmetic, matrix products, softmax,
1-d convolution and pooling, dropout, layer normalisation and a handful of
gather/scatter primitives).  Executed operations are recorded on a
per-thread tape in creation order, which is already a topological order, so
the backward pass is a single reverse sweep.  The tape also counts scalar
multiply-accumulate operations for the dominant-cost primitives (matmul and
convolution); the attention benchmark reads that counter.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, GradientError, ShapeError

_state = threading.local()


def _thread_state():
    if not hasattr(_state, "graph"):
        _state.graph = ComputeGraph()
        _state.rng = np.random.default_rng(0)
    return _state


def seed_rng(seed: int) -> None:
    """Reseed the per-thread default random source used by stochastic ops."""
    _thread_state().rng = np.random.default_rng(seed)


def default_rng() -> np.random.Generator:
    return _thread_state().rng


class ComputeGraph:
    """Per-thread tape of executed operations plus a multiply-accumulate counter.

    ``nodes`` holds operation records in creation order (inputs always precede
    their consumers).  ``op_counter`` only ever increases during forward
    execution and is independent of whether gradients are being recorded.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.op_counter: int = 0
        self.grad_enabled: bool = True

    def add_macs(self, n: int) -> None:
        self.op_counter += int(n)

    def reset(self) -> None:
        self.nodes.clear()


def active_graph() -> ComputeGraph:
    """The calling thread's compute graph."""
    return _thread_state().graph


@contextmanager
def no_grad():
    """Disable tape recording (op counting stays on)."""
    graph = active_graph()
    prev = graph.grad_enabled
    graph.grad_enabled = False
    try:
        yield
    finally:
        graph.grad_enabled = prev


class _Node:
    __slots__ = ("inputs", "out", "backward")

    def __init__(self, inputs, out, backward):
        self.inputs = inputs
        self.out = out
        self.backward = backward


class Tensor:
    """A dense float64 array with an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars are promoted to constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("division is only supported by python scalars")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    graph = active_graph()
    if graph.grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        graph.nodes.append(_Node(inputs, out, backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    if t.grad is None:
        t.grad = g.copy()  # own the buffer; g may alias a node's grad
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; fills .grad on every reachable leaf.

    The tape is consumed: after the sweep the active graph holds no nodes.
    """
    if loss.data.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("loss is not connected to any tensor that requires grad")
    graph = active_graph()
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node.out.grad is None:
            continue
        node.backward(node.out.grad)
    graph.reset()


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)

    def back(g):
        _accum(a, g)
        _accum(b, g)

    return _record(out, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)

    def back(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _record(out, (a, b), back)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)

    def back(g):
        _accum(a, -g)

    return _record(out, (a,), back)


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)

    def back(g):
        _accum(a, g * s)

    return _record(out, (a,), back)


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data)

    def back(g):
        _accum(a, 2.0 * g * a.data)

    return _record(out, (a,), back)


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge, a.data.shape))

    return _record(out, (a,), back)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def back(g):
        _accum(a, g.reshape(a.data.shape))

    return _record(out, (a,), back)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes))

    def back(g):
        _accum(a, g.transpose(inverse))

    return _record(out, (a,), back)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = Tensor(a.data[index])

    def back(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accum(a, full)

    return _record(out, (a,), back)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accum(t, g[tuple(index)])

    return _record(out, tuple(tensors), back)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy-style stacking of leading dimensions.

    Adds m*k*n multiply-accumulates (per stacked matrix) to the op counter.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} x {b.shape}")
    out_data = a.data @ b.data
    m, k = a.shape[-2], a.shape[-1]
    n = b.shape[-1]
    stacked = int(np.prod(out_data.shape[:-2], dtype=np.int64)) if out_data.ndim > 2 else 1
    active_graph().add_macs(stacked * m * k * n)
    out = Tensor(out_data)

    def back(g):
        _accum(a, g @ np.swapaxes(b.data, -1, -2))
        _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return _record(out, (a, b), back)


# ---------------------------------------------------------------------------
# activations


def sigmoid(a: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y)

    def back(g):
        _accum(a, g * y * (1.0 - y))

    return _record(out, (a,), back)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def back(g):
        _accum(a, g * (1.0 - y * y))

    return _record(out, (a,), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0))

    def back(g):
        _accum(a, g * mask)

    return _record(out, (a,), back)


def elu(a: Tensor) -> Tensor:
    pos = a.data > 0
    expm1 = np.expm1(np.minimum(a.data, 0.0))
    out = Tensor(np.where(pos, a.data, expm1))

    def back(g):
        _accum(a, g * np.where(pos, 1.0, expm1 + 1.0))

    return _record(out, (a,), back)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction.

    Entries of -inf are treated as masked and get probability zero; a slice
    must keep at least one finite entry.
    """
    if a.ndim == 0 or a.shape[-1] == 0:
        raise ShapeError(f"softmax needs a non-empty last axis, got shape {a.shape}")
    m = np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(a.data - m)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def back(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        _accum(a, p * (g - inner))

    return _record(out, (a,), back)


# ---------------------------------------------------------------------------
# structured ops


def conv1d(x: Tensor, kernel: Tensor, padding_mode: str = "circular",
           bias: Tensor | None = None) -> Tensor:
    """Length-preserving 1-d convolution.

    x is (batch, length, c_in), kernel is (width, c_in, c_out) with odd width;
    output is (batch, length, c_out).  Adds batch*length*width*c_in*c_out
    multiply-accumulates to the op counter.
    """
    if x.ndim != 3 or kernel.ndim != 3:
        raise ShapeError(f"conv1d needs 3-d operands, got {x.shape} and {kernel.shape}")
    width, c_in, c_out = kernel.shape
    if width % 2 == 0:
        raise ConfigError(f"conv1d kernel width must be odd, got {width}")
    if x.shape[-1] != c_in:
        raise ShapeError(f"conv1d channels differ: input {x.shape} vs kernel {kernel.shape}")
    if padding_mode not in ("circular", "zero"):
        raise ConfigError(f"unknown padding_mode {padding_mode!r}")
    batch, length, _ = x.shape
    pad = width // 2
    mode = "wrap" if padding_mode == "circular" else "constant"
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)), mode=mode)
    out_data = np.zeros((batch, length, c_out))
    for k in range(width):
        out_data += xp[:, k:k + length, :] @ kernel.data[k]
    active_graph().add_macs(batch * length * width * c_in * c_out)
    if bias is not None:
        out_data = out_data + bias.data
    out = Tensor(out_data)

    def back(g):
        if bias is not None:
            _accum(bias, g.sum(axis=(0, 1)))
        gk = np.zeros_like(kernel.data)
        gxp = np.zeros_like(xp)
        for k in range(width):
            seg = xp[:, k:k + length, :]
            gk[k] = np.einsum("blc,blo->co", seg, g)
            gxp[:, k:k + length, :] += g @ kernel.data[k].T
        gx = gxp[:, pad:pad + length, :].copy()
        if pad and padding_mode == "circular":
            gx[:, length - pad:, :] += gxp[:, :pad, :]
            gx[:, :pad, :] += gxp[:, length + pad:, :]
        _accum(x, gx)
        _accum(kernel, gk)

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _record(out, inputs, back)


def max_pool1d(x: Tensor, width: int = 3, stride: int = 2) -> Tensor:
    """Max pooling over the length axis with same-style padding.

    x is (batch, length, channels); output length is ceil(length / stride).
    """
    if x.ndim != 3:
        raise ShapeError(f"max_pool1d needs a 3-d input, got {x.shape}")
    batch, length, channels = x.shape
    pad = width // 2
    out_len = -(-length // stride)
    xp = np.pad(x.data, ((0, 0), (pad, pad + stride), (0, 0)),
                mode="constant", constant_values=-np.inf)
    starts = np.arange(out_len) * stride
    win_idx = starts[:, None] + np.arange(width)[None, :]
    windows = xp[:, win_idx, :]
    arg = windows.argmax(axis=2)
    out = Tensor(windows.max(axis=2))
    src = starts[None, :, None] + arg - pad  # index back into the unpadded input

    def back(g):
        gx = np.zeros_like(x.data)
        b_idx = np.arange(batch)[:, None, None]
        c_idx = np.arange(channels)[None, None, :]
        np.add.at(gx, (b_idx, src, c_idx), g)
        _accum(x, gx)

    return _record(out, (x,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply a learned gain and bias."""
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * ivar
    out = Tensor(gain.data * xhat + bias.data)

    def back(g):
        gg = g * gain.data
        _accum(bias, g.reshape(-1, d).sum(axis=0))
        _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        gx = (gg - gg.mean(axis=-1, keepdims=True)
              - xhat * (gg * xhat).mean(axis=-1, keepdims=True)) * ivar
        _accum(x, gx)

    return _record(out, (x, gain, bias), back)


def dropout(x: Tensor, rate: float, training: bool,
            rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    gen = rng if rng is not None else default_rng()
    mask = (gen.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask)

    def back(g):
        _accum(x, g * mask)

    return _record(out, (x,), back)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows along the second-to-last axis.

    x is (..., L, d) and idx is an integer array (..., u) with the same
    leading shape; the result is (..., u, d).
    """
    idx = np.asarray(idx)
    out = Tensor(np.take_along_axis(x.data, idx[..., None], axis=-2))

    def back(g):
        # build the scatter target C-ordered so the final reshape is free
        lead = int(np.prod(x.shape[:-2], dtype=np.int64)) if x.ndim > 2 else 1
        gx3 = np.zeros((lead, x.shape[-2], x.shape[-1]))
        g3 = np.ascontiguousarray(g).reshape(lead, idx.shape[-1], x.shape[-1])
        idx2 = idx.reshape(lead, idx.shape[-1])
        np.add.at(gx3, (np.arange(lead)[:, None], idx2), g3)
        _accum(x, gx3.reshape(x.data.shape))

    return _record(out, (x,), back)


def scatter_rows(base: Tensor, idx: np.ndarray, rows: Tensor) -> Tensor:
    """Copy of `base` with rows at `idx` (unique, along axis -2) replaced."""
    idx = np.asarray(idx)
    out_data = base.data.copy()
    np.put_along_axis(out_data, idx[..., None], rows.data, axis=-2)
    out = Tensor(out_data)

    def back(g):
        _accum(rows, np.take_along_axis(g, idx[..., None], axis=-2))
        gb = g.copy()
        np.put_along_axis(gb, idx[..., None], 0.0, axis=-2)
        _accum(base, gb)

    return _record(out, (base, rows), back)


def cumsum_rows(x: Tensor) -> Tensor:
    """Cumulative sum along the second-to-last axis."""
    out = Tensor(np.cumsum(x.data, axis=-2))

    def back(g):
        _accum(x, np.flip(np.cumsum(np.flip(g, axis=-2), axis=-2), axis=-2))

    return _record(out, (x,), back)


# ---------------------------------------------------------------------------
# parameter helpers


def uniform_param(rng: np.random.Generator, shape, bound: float) -> Tensor:
    """Trainable tensor drawn from U(-bound, +bound)."""
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def fan_in_param(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Trainable tensor with the usual 1/sqrt(fan_in) uniform init."""
    return uniform_param(rng, shape, 1.0 / math.sqrt(fan_in))


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)
