"""Dense tensors with define-by-run reverse-mode differentiation."""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import UsageError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def _get(name, default):
    return getattr(_state, name, default)


def default_dtype() -> np.dtype:
    return _get("dtype", np.dtype(np.float32))


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily change the dtype used for new tensors.

    Float64 is only meant for finite-difference checks; everything else runs in float32.
    """
    prev = default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = prev


def grad_enabled() -> bool:
    return _get("grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A dense row-major array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=dtype or default_dtype()))
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = "leaf"

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        t.op = "const"
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    dims = shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # arithmetic sugar; implementations live in ops
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

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Sequence[Tensor], fn: BackwardFn, op: str) -> Tensor:
    """Wrap an op output, recording it in the graph when any parent needs gradients."""
    out = Tensor._wrap(data)
    out.op = op
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = fn
    return out


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    output: Tensor


class Graph:
    """Topologically ordered view of the computation that produced a tensor.

    Every input id precedes its consumer.  The graph is rebuilt for every forward
    pass, so batches that mix a different number of samples simply trace differently.
    """

    def __init__(self, nodes: list[Node]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_output(cls, out: Tensor) -> "Graph":
        order: list[Tensor] = []
        index: dict[int, int] = {}
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            t, expanded = stack.pop()
            if id(t) in index:
                continue
            if expanded:
                index[id(t)] = len(order)
                order.append(t)
                continue
            stack.append((t, True))
            for p in t._parents:
                if p.requires_grad and id(p) not in index:
                    stack.append((p, False))
        nodes = [
            Node(t.op, tuple(index[id(p)] for p in t._parents if id(p) in index), t)
            for t in order
        ]
        return cls(nodes)


def _run_backward(graph: Graph, seed: np.ndarray) -> dict[int, np.ndarray]:
    grads: dict[int, np.ndarray] = {id(graph.nodes[-1].output): seed}
    for node in reversed(graph.nodes):
        t = node.output
        g = grads.get(id(t))
        if g is None or t._backward is None:
            continue
        for parent, pg in zip(t._parents, t._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return grads


def _check_scalar(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")


def backward(loss: Tensor, graph: Optional[Graph] = None) -> None:
    """Accumulate dLoss/dLeaf into ``.grad`` of every leaf that requires it."""
    _check_scalar(loss)
    if not loss.requires_grad:
        return
    graph = graph or Graph.from_output(loss)
    grads = _run_backward(graph, np.ones_like(loss.data))
    for node in graph.nodes:
        t = node.output
        if t.is_leaf and id(t) in grads:
            g = grads[id(t)].astype(t.data.dtype, copy=False)
            t.grad = g.copy() if t.grad is None else t.grad + g


def grad(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar with respect to arbitrary tensors, leaves untouched."""
    _check_scalar(loss)
    if not loss.requires_grad:
        return [np.zeros_like(w.data) for w in wrt]
    grads = _run_backward(Graph.from_output(loss), np.ones_like(loss.data))
    return [grads.get(id(w), np.zeros_like(w.data)) for w in wrt]


class ConstantTape:
    """Records every stop-gradient value of one forward pass so later passes can replay them.

    Replaying turns a forward pass that contains data-dependent, non-differentiable
    decisions (saliency, masks, matches, gates) into a smooth function of the
    parameters, which is what a finite-difference check needs.
    """

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.replaying = False
        self._pos = 0

    def rewind(self) -> None:
        self.replaying = True
        self._pos = 0

    def _take(self, value: np.ndarray) -> np.ndarray:
        if not self.replaying:
            self.values.append(value.copy())
            return value
        if self._pos >= len(self.values):
            raise UsageError("replayed pass requested more constants than were recorded")
        out = self.values[self._pos]
        self._pos += 1
        if out.shape != value.shape:
            raise UsageError(f"replayed constant has shape {out.shape}, expected {value.shape}")
        return out.astype(value.dtype, copy=False)


@contextlib.contextmanager
def constant_tape(tape: Optional[ConstantTape] = None) -> Iterator[ConstantTape]:
    tape = tape or ConstantTape()
    prev = _get("tape", None)
    _state.tape = tape
    try:
        yield tape
    finally:
        _state.tape = prev


def stop_gradient(x) -> Tensor:
    """Value-identical copy of ``x`` that is cut out of the graph."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    tape = _get("tape", None)
    if tape is not None:
        data = tape._take(data)
    out = Tensor._wrap(data)
    out.op = "stop_gradient"
    return out
