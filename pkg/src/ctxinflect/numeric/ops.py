"""Differentiable operations on :class:`Tensor`.

Each op computes its value with numpy and registers a backward rule through
:func:`record`.  Elementwise binary ops follow numpy broadcasting; their
gradients are summed back to the input shapes.
"""
from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from .tensor import Tensor, as_tensor, record


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a, b, kind):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g[0], a.shape), _unbroadcast(g[0], b.shape)

    return record(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g[0], a.shape), _unbroadcast(-g[0], b.shape)

    return record(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return (_unbroadcast(g[0] * b.data, a.shape),
                _unbroadcast(g[0] * a.data, b.shape))

    return record(a.data * b.data, (a, b), bw, "mul")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g[0],), "neg")


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    return record(a.data * factor, (a,), lambda g: (g[0] * factor,), "scale")


def matmul(a, b) -> Tensor:
    """``a @ b`` for a of shape (k,) or (n, k) and b of shape (k, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        g = g[0]
        if a.ndim == 1:
            return g @ b.data.T, np.outer(a.data, g)
        return g @ b.data.T, a.data.T @ g

    return record(a.data @ b.data, (a, b), bw, "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    return record(a.data.T.copy(), (a,), lambda g: (g[0].T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return record(out, (a,), lambda g: (g[0].reshape(a.shape),), "reshape")


def concat(xs, axis=-1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat of zero tensors")
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g[0], bounds, axis=axis))

    return record(out, tuple(xs), bw, "concat")


def stack(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.stack([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {exc}") from None

    def bw(g):
        return tuple(np.moveaxis(g[0], axis, 0))

    return record(out, tuple(xs), bw, "stack")


def index(a, key) -> Tensor:
    """Basic or advanced numpy indexing; gradients scatter-add back."""
    a = as_tensor(a)
    try:
        out = a.data[key]
    except IndexError as exc:
        raise ShapeError(f"index: {exc}") from None

    parts = key if isinstance(key, tuple) else (key,)
    advanced = any(isinstance(k, (list, np.ndarray)) for k in parts)

    def bw(g):
        full = np.zeros_like(a.data)
        if advanced:
            np.add.at(full, key, g[0])
        else:
            full[key] = g[0]
        return (full,)

    return record(np.array(out, dtype=np.float64), (a,), bw, "index")


def slice(a, start: int, stop: int, axis: int = -1) -> Tensor:
    key = [np.s_[:]] * a.ndim
    key[axis] = np.s_[start:stop]
    return index(a, tuple(key))


def embedding_lookup(table, ids) -> Tensor:
    """Rows of ``table`` at integer positions ``ids`` (any shape)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding id out of range for {table.shape[0]} rows")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g[0].reshape(-1, table.shape[1]))
        return (full,)

    return record(table.data[ids], (table,), bw, "embedding_lookup")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record(out, (a,), lambda g: (g[0] * (1.0 - out * out),), "tanh")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return record(out, (a,), lambda g: (g[0] * out * (1.0 - out),), "sigmoid")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):  # overflow is reported by record()
        out = np.exp(a.data)
    return record(out, (a,), lambda g: (g[0] * out,), "exp")


def _lse(x, axis, keepdims=False):
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def logsumexp(a, axis=-1) -> Tensor:
    """Max-shifted ``log(sum(exp(a)))`` along ``axis``."""
    a = as_tensor(a)
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DomainError("logsumexp over an empty axis")
    out = _lse(a.data, axis, keepdims=True)
    weights = np.exp(a.data - out)

    def bw(g):
        return (np.expand_dims(g[0], axis) * weights,)

    return record(np.squeeze(out, axis=axis), (a,), bw, "logsumexp")


def softmax(a) -> Tensor:
    a = as_tensor(a)
    z = np.exp(a.data - np.max(a.data, axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def bw(g):
        g = g[0]
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)

    return record(out, (a,), bw, "softmax")


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    out = a.data - _lse(a.data, -1, keepdims=True)
    probs = np.exp(out)

    def bw(g):
        g = g[0]
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return record(out, (a,), bw, "log_softmax")


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)

    def bw(g):
        g = g[0]
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record(np.asarray(a.data.sum(axis=axis)), (a,), bw, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def lstm_cell(gx, h, c, w_h, mask=None):
    """One fused LSTM step.

    ``gx`` holds the input pre-activations ``x @ W_x + b`` (shape (..., B, 4H),
    gate order input, forget, candidate, output).  ``w_h`` is (H, 4H), or
    (D, H, 4H) to advance D independent recurrences (e.g. both directions of
    a BiLSTM) at once with ``h`` of shape (D, B, H).  Rows with ``mask == 0``
    carry ``h`` and ``c`` through unchanged, which lets padded batches of
    different lengths share one recurrence.  Returns ``(h_new, c_new)``.
    """
    gx, h, c, w_h = as_tensor(gx), as_tensor(h), as_tensor(c), as_tensor(w_h)
    hidden = h.shape[-1]
    if (w_h.shape[-2:] != (hidden, 4 * hidden) or gx.shape[-1] != 4 * hidden
            or c.shape != h.shape or gx.shape[:-1] != h.shape[:-1]
            or (w_h.ndim == 3 and (h.ndim != 3 or h.shape[0] != w_h.shape[0]))):
        raise ShapeError(
            f"lstm_cell: gx {gx.shape}, h {h.shape}, c {c.shape}, W_h {w_h.shape}")
    pre = gx.data + h.data @ w_h.data
    gates = _sigmoid(pre)
    i = gates[..., :hidden]
    f = gates[..., hidden:2 * hidden]
    o = gates[..., 3 * hidden:]
    g = np.tanh(pre[..., 2 * hidden:3 * hidden])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)
        m = m.reshape(m.shape + (1,))
        keep = 1.0 - m
        h_out = m * h_new + keep * h.data
        c_out = m * c_new + keep * c.data
    else:
        m, keep = 1.0, None
        h_out, c_out = h_new, c_new

    def bw(grads):
        dh_out, dc_out = grads
        dh = m * dh_out
        dc = m * dc_out + dh * o * (1.0 - tc * tc)
        slope = gates * (1.0 - gates)
        slope[..., 2 * hidden:3 * hidden] = 1.0 - g * g
        da = np.concatenate([dc * g, dc * c.data, dc * i, dh * tc], axis=-1) * slope
        dh_prev = da @ np.swapaxes(w_h.data, -1, -2)
        dc_prev = dc * f
        if keep is not None:
            dh_prev += keep * dh_out
            dc_prev += keep * dc_out
        dw = np.swapaxes(h.data, -1, -2) @ da
        if w_h.ndim == 2 and dw.ndim == 3:
            dw = dw.sum(axis=0)
        return da, dh_prev, dc_prev, dw

    return record((h_out, c_out), (gx, h, c, w_h), bw, "lstm_cell")


_FORWARD = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "matmul": matmul,
    "concat": lambda *xs, axis=-1: concat(xs, axis=axis),
    "stack": lambda *xs, axis=0: stack(xs, axis=axis),
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "logsumexp": logsumexp,
    "embedding_lookup": embedding_lookup,
    "slice": slice,
    "index": index,
    "transpose": transpose,
    "reshape": reshape,
    "sum": sum,
    "mean": mean,
    "lstm_cell": lstm_cell,
}


def forward_op(kind: str, *inputs, **kwargs):
    """Dispatch an op by name, e.g. ``forward_op("add", x, y)``."""
    try:
        fn = _FORWARD[kind]
    except KeyError:
        raise DomainError(f"unknown op {kind!r}") from None
    return fn(*inputs, **kwargs)
