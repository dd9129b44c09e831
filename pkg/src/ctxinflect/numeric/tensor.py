"""Dense float64 tensors and a dynamic reverse-mode tape.

A :class:`Tape` is activated with ``with Tape():``.  Every op applied while a
tape is active, to at least one input that requires a gradient, is appended
to it together with its backward rule.  :func:`backward` then walks the tape
in reverse and accumulates gradients into ``Tensor.grad``.  With no active
tape the same ops simply compute values, which is how inference runs.
"""
from __future__ import annotations

import contextvars

import numpy as np

from ..errors import NumericError, StateError

_ACTIVE = contextvars.ContextVar("ctxinflect_tape", default=None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_tape")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.index(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self.records = []
        self._token = None

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records = []


def active_tape():
    return _ACTIVE.get()


class no_grad:
    """Suspend recording inside an active tape."""

    def __enter__(self):
        self._token = _ACTIVE.set(None)

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        return False


def record(outputs, inputs, backward_fn, kind="op"):
    """Wrap raw arrays as Tensors and register them on the active tape.

    ``backward_fn(out_grads)`` receives one gradient array per output and
    returns one gradient (or None) per input.
    """
    single = not isinstance(outputs, tuple)
    arrays = (outputs,) if single else outputs
    for arr in arrays:
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite value produced by {kind}")
    tensors = tuple(Tensor(a) for a in arrays)
    tape = _ACTIVE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        for t in tensors:
            t.requires_grad = True
            t._tape = tape
        tape.records.append((tensors, inputs, backward_fn))
    return tensors[0] if single else tensors


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on.

    The tape that recorded ``loss`` is cleared afterwards, so each forward
    pass supports exactly one backward pass.
    """
    tape = loss._tape
    if tape is None or not tape.records:
        raise StateError("backward called without a recorded forward pass")
    if loss.size != 1:
        raise StateError(f"loss must be a scalar, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for outputs, inputs, fn in reversed(tape.records):
        out_grads = [o.grad for o in outputs]
        if all(g is None for g in out_grads):
            continue
        out_grads = [np.zeros_like(o.data) if g is None else g
                     for o, g in zip(outputs, out_grads)]
        for inp, g in zip(inputs, fn(out_grads)):
            if g is None or not inp.requires_grad:
                continue
            inp.grad = g if inp.grad is None else inp.grad + g
    tape.clear()
