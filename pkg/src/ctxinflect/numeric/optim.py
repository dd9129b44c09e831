"""Named parameters, Adam, and global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError, StateError
from .tensor import Tensor


@dataclass
class Param:
    value: Tensor
    trainable: bool = True
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros_like(self.value.data)
        if self.v is None:
            self.v = np.zeros_like(self.value.data)

    @property
    def grad(self):
        return self.value.grad


@dataclass
class ParameterStore:
    params: dict = field(default_factory=dict)

    def add(self, name: str, data, trainable: bool = True) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=trainable, name=name)
        self.params[name] = Param(t, trainable)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name].value

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def items(self):
        return ((k, p.value) for k, p in self.params.items())

    def entry(self, name: str) -> Param:
        return self.params[name]

    def set_value(self, name: str, data) -> None:
        p = self.params[name]
        data = np.asarray(data, dtype=np.float64)
        if data.shape != p.value.shape:
            raise ShapeError(f"{name}: expected {p.value.shape}, got {data.shape}")
        p.value.data = data.copy()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.value.grad = None

    def n_weights(self) -> int:
        return int(np.sum([p.value.size for p in self.params.values()]))


def uniform_init(rng: np.random.Generator, shape, fan_in=None, fan_out=None):
    """Glorot-uniform draw in +-sqrt(6 / (fan_in + fan_out))."""
    if fan_in is None:
        fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def global_norm(store: ParameterStore) -> float:
    total = 0.0
    for p in store.params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def clip_gradients(store: ParameterStore, max_norm: float = 5.0) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    norm = global_norm(store)
    if norm > max_norm:
        factor = max_norm / norm
        for p in store.params.values():
            if p.grad is not None:
                p.value.grad = p.grad * factor
    return norm


def adam_step(store: ParameterStore, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> ParameterStore:
    """Bias-corrected Adam update of every trainable parameter.

    Parameters without a gradient this step are treated as having a zero
    gradient.  Gradients are cleared afterwards.
    """
    if not any(p.grad is not None for p in store.params.values() if p.trainable):
        raise StateError("adam_step called before gradients were populated")
    for p in store.params.values():
        if not p.trainable:
            p.value.grad = None
            continue
        g = p.grad if p.grad is not None else 0.0
        p.step += 1
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1 ** p.step)
        denom = np.sqrt(p.v / (1.0 - beta2 ** p.step))
        denom += eps
        p.value.data = p.value.data - lr * m_hat / denom
        p.value.grad = None
    return store
