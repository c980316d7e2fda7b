"""Dense float64 tensors with define-by-run reverse-mode differentiation.

A :class:`Tape` records every operation applied to tensors that live on it,
in execution order, so the node list is topologically sorted by
construction.  :meth:`Tape.backward` sweeps it in reverse and deposits
adjoints on the parameter leaves.  Tensors without a tape are constants:
operations on them run eagerly and record nothing, which is the inference
path used by evaluation code.

The tape is meant to be thrown away after each backward pass.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

MAX_RANK = 3


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A precondition on call structure was violated."""


class Tensor:
    """An f64 array, optionally attached to a tape node."""

    __slots__ = ("data", "tape", "node", "grad")

    def __init__(self, data, tape: Tape | None = None, node: int | None = None):
        arr = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise DimensionError(f"rank {arr.ndim} exceeds the supported maximum {MAX_RANK}")
        if any(d <= 0 for d in arr.shape):
            raise DimensionError(f"shape {arr.shape} has a non-positive dimension")
        self.data = arr
        self.tape = tape
        self.node = node
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def requires_grad(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        """Same values, cut off from the tape (no gradient flows back)."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("division is only defined by a scalar")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# A vector-Jacobian product: output adjoint -> one adjoint per recorded input.
Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    vjp: Vjp | None
    shape: tuple[int, ...]


@dataclass
class Tape:
    """Ordered record of operations for one forward pass."""

    nodes: list[Node] = field(default_factory=list)
    gradients: dict[int, np.ndarray] = field(default_factory=dict)
    leaves: list[Tensor] = field(default_factory=list)

    def param(self, data) -> Tensor:
        """Register a differentiable leaf (a trainable parameter or input)."""
        t = Tensor(data)
        t.tape = self
        t.node = len(self.nodes)
        self.nodes.append(Node("leaf", (), None, t.shape))
        self.leaves.append(t)
        return t

    def watch(self, params: Sequence[np.ndarray]) -> list[Tensor]:
        return [self.param(p) for p in params]

    def record(self, op: str, inputs: Sequence[Tensor], out: np.ndarray, vjp: Vjp) -> Tensor:
        ids = tuple(x.node for x in inputs)
        t = Tensor(out)
        t.tape = self
        t.node = len(self.nodes)
        self.nodes.append(Node(op, ids, vjp, t.shape))
        return t

    def backward(self, root: Tensor) -> list[np.ndarray]:
        """Reverse sweep from a scalar root.

        Returns the adjoint of every leaf in registration order and also
        stores it on ``leaf.grad``.  Leaves the root does not depend on get
        zero adjoints.
        """
        if root.data.size != 1:
            raise ContractError(f"backward() needs a scalar root, got shape {root.shape}")
        for leaf in self.leaves:
            leaf.grad = np.zeros_like(leaf.data)
        if root.tape is None:
            return [leaf.grad for leaf in self.leaves]
        if root.tape is not self:
            raise ContractError("root was recorded on a different tape")
        adj: dict[int, np.ndarray] = {root.node: np.ones(root.shape)}
        for idx in range(root.node, -1, -1):
            g = adj.get(idx)
            if g is None:
                continue
            node = self.nodes[idx]
            if node.vjp is None:
                continue
            for src, contrib in zip(node.inputs, node.vjp(g)):
                if src is None or contrib is None:
                    continue
                if src in adj:
                    adj[src] = adj[src] + contrib
                else:
                    adj[src] = contrib
        self.gradients = adj
        for leaf in self.leaves:
            if leaf.node in adj:
                leaf.grad = np.array(adj[leaf.node])
        return [leaf.grad for leaf in self.leaves]


def _tape_of(*xs: Tensor) -> Tape | None:
    tape = None
    for x in xs:
        if x.tape is not None:
            if tape is not None and x.tape is not tape:
                raise ContractError("operands belong to different tapes")
            tape = x.tape
    return tape


def _emit(op: str, inputs: Sequence[Tensor], out: np.ndarray, vjp: Vjp) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(out)
    live = [x for x in inputs if x.tape is not None]
    mask = [x.tape is not None for x in inputs]

    def routed(g):
        grads = vjp(g)
        return [gi for gi, keep in zip(grads, mask) if keep]

    return tape.record(op, live, out, routed)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, d in enumerate(shape):
        if d == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are incompatible") from None


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _emit("matmul", (a, b), A @ B, lambda g: (g @ B.T, A.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    A, B = a.data, b.data
    return _emit("mul", (a, b), A * B,
                 lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", (a,), a.data * c, lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    s = special.expit(a.data)
    return _emit("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return _emit("exp", (a,), e, lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log: input has non-positive entries")
    x = a.data
    return _emit("log", (a,), np.log(x), lambda g: (g / x,))


def relu(a: Tensor) -> Tensor:
    on = (a.data > 0).astype(np.float64)
    return _emit("relu", (a,), a.data * on, lambda g: (g * on,))


def tensor_sum(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    if axis is None:
        out = np.array(a.data.sum()).reshape(1)
        return _emit("sum", (a,), out, lambda g: (np.broadcast_to(g.reshape(()), shape).copy(),))
    out = a.data.sum(axis=axis)
    if out.ndim == 0:
        out = out.reshape(1)
    return _emit("sum", (a,), out,
                 lambda g: (np.broadcast_to(np.expand_dims(g.reshape(np.delete(shape, axis)), axis),
                                            shape).copy(),))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(tensor_sum(a, axis), 1.0 / n)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax over the last axis, stable for large logits."""
    ls = special.log_softmax(a.data, axis=-1)
    p = np.exp(ls)
    return _emit("log_softmax", (a,), ls,
                 lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


def softmax(a: Tensor) -> Tensor:
    return exp(log_softmax(a))


def stack_mean(xs: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of equally shaped tensors."""
    if not xs:
        raise ContractError("stack_mean of an empty sequence")
    acc = xs[0]
    for x in xs[1:]:
        if x.shape != acc.shape:
            raise DimensionError(f"stack_mean: shapes {acc.shape} and {x.shape} differ")
        acc = add(acc, x)
    return acc if len(xs) == 1 else scale(acc, 1.0 / len(xs))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
}


def elementwise(kind: str, *args):
    """Dispatch one of the named elementwise kinds."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    return fn(*args)
