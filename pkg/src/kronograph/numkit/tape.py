"""Reverse-mode differentiation tape.

A :class:`Tape` records every differentiable primitive applied to its
:class:`Node` values in creation order; :meth:`Tape.backward` walks that
list in reverse and accumulates vector-Jacobian products.  Trainable arrays
live in a :class:`Params` store, which also receives the gradients.

Values are ``float64`` numpy arrays.  Leading axes beyond the last two are
treated as batch axes by the matrix primitives, so one tape can carry a
whole mini-batch of matrices.
"""
from __future__ import annotations

from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError, ShapeError

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Params:
    """Named float64 arrays with matching gradient buffers.

    Frozen parameters participate in the forward pass but are never
    differentiated; their gradient stays identically zero.
    """

    def __init__(self, values: dict[str, np.ndarray] | None = None, frozen: Iterable[str] = ()):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.frozen: set[str] = set()
        for name, value in (values or {}).items():
            self.add(name, value)
        for name in frozen:
            self.freeze(name)

    def add(self, name: str, value, frozen: bool = False) -> None:
        arr = np.array(value, dtype=np.float64)
        self.values[name] = arr
        self.grads[name] = np.zeros_like(arr)
        if frozen:
            self.frozen.add(name)

    def freeze(self, name: str) -> None:
        if name not in self.values:
            raise KeyError(name)
        self.frozen.add(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __setitem__(self, name: str, value) -> None:
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self.values[name].shape:
            raise ShapeError(f"parameter {name!r}: expected shape {self.values[name].shape}, got {arr.shape}")
        self.values[name] = arr.copy()

    def __contains__(self, name: object) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def names(self) -> list[str]:
        return list(self.values)

    def trainable(self) -> list[str]:
        return [n for n in self.values if n not in self.frozen]

    def count(self, trainable_only: bool = True) -> int:
        names = self.trainable() if trainable_only else self.names()
        return int(sum(self.values[n].size for n in names))

    def zero_grad(self) -> None:
        for name, value in self.values.items():
            self.grads[name] = np.zeros_like(value)

    def copy(self) -> "Params":
        out = Params()
        for name, value in self.values.items():
            out.add(name, value.copy(), frozen=name in self.frozen)
        return out


class Node:
    """A value recorded on a tape."""

    __slots__ = ("value", "tape", "parents", "vjp", "requires_grad", "name", "grad")

    def __init__(self, value: np.ndarray, tape: "Tape", parents=(), vjp: VJP | None = None,
                 requires_grad: bool = False, name: str | None = None):
        self.value = value
        self.tape = tape
        self.parents = tuple(parents)
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape})"

    # Operator sugar; the implementations live in ``ops``.
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
        if np.isscalar(other):
            return ops.scale(self, float(other))
        return ops.hadamard(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self, params: Params | None = None):
        self.params = params if params is not None else Params()
        self.nodes: list[Node] = []
        self._param_nodes: dict[str, Node] = {}

    def param(self, name: str) -> Node:
        node = self._param_nodes.get(name)
        if node is None:
            node = Node(self.params[name], self, requires_grad=name not in self.params.frozen, name=name)
            self._param_nodes[name] = node
        return node

    def constant(self, value, name: str | None = None) -> Node:
        return Node(np.asarray(value, dtype=np.float64), self, name=name)

    def watch(self, value, name: str | None = None) -> Node:
        """Leaf that receives a gradient in ``node.grad`` after backward."""
        node = Node(np.array(value, dtype=np.float64), self, requires_grad=True, name=name)
        self.nodes.append(node)
        return node

    def record(self, value: np.ndarray, parents: Sequence, vjp: VJP) -> Node:
        requires = any(isinstance(p, Node) and p.requires_grad for p in parents)
        node = Node(value, self, parents, vjp if requires else None, requires_grad=requires)
        if requires:
            self.nodes.append(node)
        return node

    def backward(self, loss: Node) -> dict[str, np.ndarray]:
        """Accumulate d(loss)/d(param) into ``self.params.grads``.

        Parameters not reached by the loss, and frozen parameters, get an
        all-zero gradient.
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise ContractError("loss must be a node recorded on this tape")
        if loss.value.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.value.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.vjp is None:
                node.grad = g
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not isinstance(parent, Node) or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        self.params.zero_grad()
        for name, node in self._param_nodes.items():
            g = grads.get(id(node))
            if g is not None and name not in self.params.frozen:
                self.params.grads[name] = np.array(g, dtype=np.float64).reshape(node.value.shape)
        return self.params.grads


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
        if isinstance(x, (list, tuple)):
            t = tape_of(*x)
            if t is not None:
                return t
    return None


def record(value: np.ndarray, inputs: Sequence, vjp: VJP):
    """Record ``value`` on the tape of the first node in ``inputs``.

    With no node among the inputs the raw array is returned, so every
    primitive doubles as a plain numpy function.
    """
    tape = tape_of(*inputs)
    if tape is None:
        return value
    return tape.record(value, inputs, vjp)


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)
