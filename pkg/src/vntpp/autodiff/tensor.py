"""Tensors, the recording tape and the backward pass."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NonFiniteError, NotScalar

_state = threading.local()


def _get(name, default):
    return getattr(_state, name, default)


class _Config:
    """Process-wide switches. ``check_finite`` fails fast on NaN/Inf outputs."""

    check_finite: bool = True


config = _Config()


def set_check_finite(flag: bool) -> None:
    config.check_finite = bool(flag)


@contextmanager
def check_finite(flag: bool):
    previous = config.check_finite
    config.check_finite = bool(flag)
    try:
        yield
    finally:
        config.check_finite = previous


def grad_enabled() -> bool:
    return _get("grad_enabled", True)


@contextmanager
def no_grad():
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@dataclass
class Node:
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    parents: tuple
    out: "Tensor"
    op: str = ""


@dataclass
class Tape:
    """Primitive applications in the order they ran (inputs before consumers)."""

    nodes: list = field(default_factory=list)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)


def current_tape() -> Tape:
    tape = _get("tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


class Tensor:
    """Dense float64 array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_leaf")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._leaf = True

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; the primitives live in ops.py
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
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, idx):
        from . import ops
        return ops.slice(self, idx)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data: np.ndarray, parents: tuple, vjp, op: str = "") -> Tensor:
    """Wrap a primitive's forward value, recording it when any parent needs grad."""
    if config.check_finite and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite output from {op or 'primitive'} (shape {np.shape(data)})")
    needs = grad_enabled() and any(isinstance(p, Tensor) and p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._leaf = False
        current_tape().record(Node(vjp, parents, out, op))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into every leaf tensor with ``requires_grad``.

    Leaf gradients add up across calls until zeroed; the tape is cleared.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = current_tape()
    seed = np.ones_like(loss.data)
    if loss._leaf:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        tape.clear()
        return
    grads = {id(loss): seed}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for parent, gp in zip(node.parents, node.vjp(g)):
            if gp is None or not isinstance(parent, Tensor) or not parent.requires_grad:
                continue
            if parent._leaf:
                parent.grad = np.array(gp, dtype=np.float64) if parent.grad is None else parent.grad + gp
            else:
                key = id(parent)
                grads[key] = grads[key] + gp if key in grads else gp
    tape.clear()
